#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cyclife/error.hpp"
#include "cyclife/parallel.hpp"

namespace cyclife::num {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) fail(ErrorCode::dimension_mismatch, "ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix from_rows(const std::vector<Vector>& rows) {
    DenseMatrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) fail(ErrorCode::dimension_mismatch, "ragged row list");
      std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + i * m.cols_);
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector column(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) fail(ErrorCode::dimension_mismatch, "matrix product shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Vector multiply(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) fail(ErrorCode::dimension_mismatch, "matrix-vector shape mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample (n-1) standard deviation; 0 for fewer than two values.
inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// Cholesky

struct CholeskyFactor {
  DenseMatrix lower;
  double jitter_used = 0.0;

  std::size_t size() const noexcept { return lower.rows(); }
};

namespace detail {

// In-place attempt; returns false on a non-positive or non-finite pivot.
inline bool try_cholesky(const DenseMatrix& a, double jitter, DenseMatrix& l) {
  const std::size_t n = a.rows();
  l = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + jitter;
    const auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const auto li = l.row(i);
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace detail

// Factorizes A (+ jitter I). The first attempt uses no jitter; on failure the
// jitter starts at 1e-10 * mean(diag) and grows by 10x while it stays within
// max_jitter.
inline CholeskyFactor cholesky(const DenseMatrix& a, double max_jitter) {
  const std::size_t n = a.rows();
  if (a.cols() != n) fail(ErrorCode::dimension_mismatch, "cholesky: matrix is not square");
  double scale = 1.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale)
        fail(ErrorCode::invalid_argument, "cholesky: matrix is not symmetric");

  for (double v : a.data())
    if (!std::isfinite(v)) fail(ErrorCode::non_finite, "cholesky: matrix has non-finite entries");
  if (std::isnan(max_jitter)) fail(ErrorCode::invalid_argument, "cholesky: max_jitter is NaN");

  CholeskyFactor f;
  if (detail::try_cholesky(a, 0.0, f.lower)) return f;

  double diag_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_mean += a(i, i);
  diag_mean = n ? diag_mean / static_cast<double>(n) : 0.0;
  if (!(diag_mean > 0.0)) diag_mean = 1.0;

  for (double jitter = 1e-10 * diag_mean; jitter <= max_jitter && std::isfinite(jitter); jitter *= 10.0) {
    if (detail::try_cholesky(a, jitter, f.lower)) {
      f.jitter_used = jitter;
      return f;
    }
  }
  fail(ErrorCode::not_positive_definite,
       "cholesky: matrix not positive definite within jitter " + std::to_string(max_jitter));
}

// Solves L x = b.
inline Vector solve_lower(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector x(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    const auto li = l.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * x[k];
    x[i] = s / li[i];
  }
  return x;
}

// Solves L^T x = b.
inline Vector solve_lower_transposed(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector x(b.begin(), b.end());
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

inline Vector cholesky_solve(const CholeskyFactor& f, std::span<const double> b) {
  if (b.size() != f.size()) fail(ErrorCode::dimension_mismatch, "cholesky_solve: size mismatch");
  return solve_lower_transposed(f.lower, solve_lower(f.lower, b));
}

inline double log_determinant(const CholeskyFactor& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::log(f.lower(i, i));
  return 2.0 * s;
}

// (L L^T)^{-1}, computed column by column from L^{-1}.
inline DenseMatrix cholesky_inverse(const CholeskyFactor& f) {
  const std::size_t n = f.size();
  const DenseMatrix& l = f.lower;
  // Linv is lower triangular.
  DenseMatrix linv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    linv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s -= l(i, k) * linv(k, j);
      linv(i, j) = s / l(i, i);
    }
  }
  DenseMatrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  return inv;
}

// ---------------------------------------------------------------------------
// Least squares

// argmin_b ||y - X b||_2 through the normal equations. A column whose entries
// all equal the same nonzero constant is treated as the intercept: the other
// columns are centered before factorization and the intercept is restored
// afterwards.
inline Vector solve_lls(const DenseMatrix& x, std::span<const double> y) {
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  if (y.size() != n) fail(ErrorCode::dimension_mismatch, "solve_lls: X and y row counts differ");
  if (k == 0 || n < k) fail(ErrorCode::invalid_argument, "solve_lls: need n >= k >= 1");

  std::size_t intercept = k;
  for (std::size_t j = 0; j < k && intercept == k; ++j) {
    const double c = x(0, j);
    if (c == 0.0) continue;
    bool constant = true;
    for (std::size_t i = 1; i < n && constant; ++i) constant = x(i, j) == c;
    if (constant) intercept = j;
  }

  Vector means(k, 0.0);
  if (intercept != k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (j == intercept) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += x(i, j);
      means[j] = s / static_cast<double>(n);
    }
  }

  DenseMatrix gram(k, k);
  Vector rhs(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double xa = x(i, a) - means[a];
      rhs[a] += xa * y[i];
      for (std::size_t b = 0; b <= a; ++b) gram(a, b) += xa * (x(i, b) - means[b]);
    }
  }
  double diag_mean = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < a; ++b) gram(b, a) = gram(a, b);
    diag_mean += gram(a, a);
  }
  diag_mean /= static_cast<double>(k);
  if (!(diag_mean > 0.0)) fail(ErrorCode::not_positive_definite, "solve_lls: X is all zeros");

  CholeskyFactor f;
  try {
    f = cholesky(gram, 1e-8 * diag_mean);
  } catch (const Error&) {
    fail(ErrorCode::not_positive_definite, "solve_lls: X is rank deficient");
  }
  Vector b = cholesky_solve(f, rhs);
  if (intercept != k) {
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) shift += means[j] * b[j];
    b[intercept] -= shift / x(0, intercept);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Quadrature

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::dimension_mismatch, "trapezoid: size mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

// ---------------------------------------------------------------------------
// Unconstrained minimization

struct MinimizerConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-12;
  int restarts = 1;
  std::uint64_t seed = 0;
  // Standard deviation of the Gaussian offset applied to x0 for restarts
  // beyond the first. Callers optimizing log-parameters get multiplicative
  // log-normal perturbations of the underlying positive quantities.
  double restart_scale = 0.5;
  unsigned threads = 1;
};

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int restart_index = 0;
};

// Value and gradient at x; the gradient vector has already been sized.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

namespace detail {

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

// BFGS on the inverse Hessian with an Armijo backtracking line search.
inline MinimizeResult bfgs(const Objective& objective, Vector x, const MinimizerConfig& cfg) {
  const std::size_t n = x.size();
  MinimizeResult res;
  Vector g(n, 0.0);
  double f = objective(x, g);
  if (!std::isfinite(f) || !all_finite(g))
    fail(ErrorCode::non_finite, "minimize: objective is not finite at the starting point");

  DenseMatrix h = DenseMatrix::identity(n);
  Vector p(n), xn(n), gn(n), s(n), yv(n), hy(n);
  bool scaled = false;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    res.iterations = it;
    if (max_abs(g) < cfg.gradient_tolerance) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < n; ++j) v -= h(i, j) * g[j];
      p[i] = v;
    }
    double slope = dot(g, p);
    if (!(slope < 0.0)) {
      h = DenseMatrix::identity(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
      slope = dot(g, p);
    }

    double t = 1.0;
    if (!scaled) t = std::min(1.0, 1.0 / std::max(max_abs(p), 1e-300));
    double fn = 0.0;
    bool accepted = false;
    while (t * max_abs(p) >= cfg.step_tolerance) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + t * p[i];
      std::fill(gn.begin(), gn.end(), 0.0);
      fn = objective(xn, gn);
      if (std::isfinite(fn) && all_finite(gn) && fn <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No decrease is possible along the search direction at this resolution.
      res.converged = max_abs(g) < std::sqrt(cfg.gradient_tolerance);
      break;
    }

    double sy = 0.0, yy = 0.0, step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      yv[i] = gn[i] - g[i];
      sy += s[i] * yv[i];
      yy += yv[i] * yv[i];
      step = std::max(step, std::abs(s[i]));
    }
    const double prev_f = f;
    x = xn;
    g = gn;
    f = fn;

    if (sy > 1e-12 * std::sqrt(yy) * std::sqrt(dot(s, s))) {
      if (!scaled) {
        h = DenseMatrix::identity(n);
        for (std::size_t i = 0; i < n; ++i) h(i, i) = sy / yy;
        scaled = true;
      }
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += h(i, j) * yv[j];
        hy[i] = v;
      }
      const double yhy = dot(yv, hy);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          h(i, j) += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
    }

    if (step < cfg.step_tolerance ||
        std::abs(prev_f - f) <= 1e-15 * std::max(1.0, std::abs(f))) {
      res.converged = true;
      res.iterations = it + 1;
      break;
    }
    res.iterations = it + 1;
  }
  if (!res.converged && max_abs(g) < cfg.gradient_tolerance) res.converged = true;
  res.x = std::move(x);
  res.value = f;
  return res;
}

}  // namespace detail

// Quasi-Newton minimization with optional seeded multi-start. The first start
// is x0 itself; the best finite value wins, ties going to the lowest restart
// index, so the result is independent of cfg.threads.
inline MinimizeResult minimize(const Objective& objective, const Vector& x0,
                               const MinimizerConfig& cfg) {
  if (cfg.gradient_tolerance <= 0.0 || cfg.step_tolerance <= 0.0)
    fail(ErrorCode::invalid_argument, "minimize: tolerances must be positive");
  const std::size_t restarts = static_cast<std::size_t>(std::max(1, cfg.restarts));

  std::vector<Vector> starts(restarts, x0);
  for (std::size_t r = 1; r < restarts; ++r) {
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + r);
    std::normal_distribution<double> normal(0.0, cfg.restart_scale);
    for (double& v : starts[r]) v += normal(rng);
  }

  std::vector<MinimizeResult> results(restarts);
  std::vector<char> ok(restarts, 0);
  // The unperturbed start must be valid; perturbed starts that land on a
  // non-finite region are skipped.
  results[0] = detail::bfgs(objective, starts[0], cfg);
  ok[0] = 1;
  parallel_for(restarts - 1, cfg.threads, [&](std::size_t i) {
    const std::size_t r = i + 1;
    try {
      results[r] = detail::bfgs(objective, starts[r], cfg);
      ok[r] = 1;
    } catch (const Error&) {
      ok[r] = 0;
    }
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r) {
    if (ok[r] && std::isfinite(results[r].value) && results[r].value < results[best].value)
      best = r;
  }
  results[best].restart_index = static_cast<int>(best);
  return results[best];
}

}  // namespace cyclife::num
