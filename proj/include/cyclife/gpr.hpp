#pragma once

// Gaussian process regression with a constant mean and an ARD exponential
// kernel k(xi, xj) = sf^2 exp(-r), r = sqrt(sum_m (xim - xjm)^2 / lm^2).
// Hyperparameters are fitted by minimizing the negative log marginal
// likelihood; positive parameters live in log space during optimization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclife/error.hpp"
#include "cyclife/numerics.hpp"

namespace cyclife::gpr {

using num::DenseMatrix;
using num::Vector;

struct GprHyperparams {
  double signal_std = 1.0;
  std::vector<double> length_scales;
  double noise_std = 1.0;
  double constant_mean = 0.0;

  std::size_t dims() const noexcept { return length_scales.size(); }

  void validate() const {
    bool ok = signal_std > 0.0 && noise_std > 0.0 && std::isfinite(constant_mean);
    for (double l : length_scales) ok = ok && l > 0.0 && std::isfinite(l);
    if (!ok) fail(ErrorCode::invalid_argument, "gpr: hyperparameters must be positive and finite");
  }

  bool operator==(const GprHyperparams&) const = default;
};

// Per-column affine map applied to inputs before the kernel sees them. Empty
// means identity.
struct Standardization {
  std::vector<double> means;
  std::vector<double> stds;

  bool empty() const noexcept { return means.empty(); }

  // Population statistics; zero-spread columns keep unit scale so they map
  // to a constant 0.
  static Standardization fit(const DenseMatrix& x) {
    Standardization s;
    const std::size_t n = x.rows();
    s.means.assign(x.cols(), 0.0);
    s.stds.assign(x.cols(), 1.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += x(i, j);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      s.means[j] = m;
      s.stds[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
  }

  DenseMatrix apply(const DenseMatrix& x) const {
    if (empty()) return x;
    if (x.cols() != means.size()) fail(ErrorCode::dimension_mismatch, "standardization: column count mismatch");
    DenseMatrix out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - means[j]) / stds[j];
    return out;
  }

  bool operator==(const Standardization&) const = default;
};

struct GprConfig {
  num::MinimizerConfig minimizer{.max_iterations = 300,
                                 .gradient_tolerance = 1e-5,
                                 .step_tolerance = 1e-10,
                                 .restarts = 5,
                                 .seed = 0,
                                 .restart_scale = 0.5,
                                 .threads = 1};
  bool standardize = true;
  // Cholesky jitter ceiling, relative to the mean diagonal of K + sn^2 I.
  double max_jitter_relative = 1e-6;
};

struct GprModel {
  GprHyperparams hyper;
  DenseMatrix x_train;  // as supplied by the caller
  Vector y_train;
  Standardization standardization;
  double max_jitter_relative = 1e-6;
  // Derived state.
  DenseMatrix x_kernel;  // x_train after standardization
  num::CholeskyFactor chol;  // of K + sn^2 I
  Vector alpha;              // (K + sn^2 I)^{-1} (y - beta)
  double nlml = 0.0;
  bool converged = false;
};

// ---------------------------------------------------------------------------
// Kernel

inline double ard_exponential(std::span<const double> xi, std::span<const double> xj, const GprHyperparams& h) {
  double r2 = 0.0;
  for (std::size_t m = 0; m < xi.size(); ++m) {
    const double d = (xi[m] - xj[m]) / h.length_scales[m];
    r2 += d * d;
  }
  return h.signal_std * h.signal_std * std::exp(-std::sqrt(r2));
}

inline DenseMatrix gram(const DenseMatrix& x, const GprHyperparams& h) {
  if (x.cols() != h.dims()) fail(ErrorCode::dimension_mismatch, "gram: input width differs from length scales");
  const std::size_t n = x.rows();
  DenseMatrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = h.signal_std * h.signal_std;
    for (std::size_t j = 0; j < i; ++j) {
      const double v = ard_exponential(x.row(i), x.row(j), h);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Marginal likelihood

struct NlmlResult {
  double value = 0.0;
  // Order: log sf, log l_1..log l_d, log sn, beta.
  Vector gradient;
};

namespace detail {

// Caches per-dimension squared differences of the training inputs so repeated
// likelihood evaluations only redo the O(n^2 d) kernel pass and the O(n^3)
// factorization.
class NlmlEvaluator {
 public:
  NlmlEvaluator(const DenseMatrix& x, std::span<const double> y, double max_jitter_relative)
      : n_(x.rows()), d_(x.cols()), y_(y.begin(), y.end()), jitter_rel_(max_jitter_relative) {
    if (y.size() != n_) fail(ErrorCode::dimension_mismatch, "nlml: x and y row counts differ");
    sq_.assign(n_ * (n_ - 1) / 2 * d_, 0.0);
    std::size_t p = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < i; ++j, ++p)
        for (std::size_t m = 0; m < d_; ++m) {
          const double diff = x(i, m) - x(j, m);
          sq_[p * d_ + m] = diff * diff;
        }
  }

  NlmlResult operator()(const GprHyperparams& h) const {
    const double sf2 = h.signal_std * h.signal_std;
    const double sn2 = h.noise_std * h.noise_std;
    std::vector<double> inv_l2(d_);
    for (std::size_t m = 0; m < d_; ++m) inv_l2[m] = 1.0 / (h.length_scales[m] * h.length_scales[m]);

    DenseMatrix ky(n_, n_);
    std::vector<double> r(n_ * (n_ - 1) / 2);
    std::size_t p = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      ky(i, i) = sf2 + sn2;
      for (std::size_t j = 0; j < i; ++j, ++p) {
        double r2 = 0.0;
        for (std::size_t m = 0; m < d_; ++m) r2 += sq_[p * d_ + m] * inv_l2[m];
        r[p] = std::sqrt(r2);
        const double v = sf2 * std::exp(-r[p]);
        ky(i, j) = v;
        ky(j, i) = v;
      }
    }

    const auto f = num::cholesky(ky, jitter_rel_ * (sf2 + sn2));
    Vector resid(n_);
    for (std::size_t i = 0; i < n_; ++i) resid[i] = y_[i] - h.constant_mean;
    const Vector a = num::cholesky_solve(f, resid);

    NlmlResult out;
    out.value = 0.5 * num::dot(resid, a) + 0.5 * num::log_determinant(f) +
                0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);
    out.gradient.assign(d_ + 3, 0.0);

    // dNLML/dtheta = 0.5 tr(W dKy/dtheta), W = Ky^{-1} - a a^T.
    const DenseMatrix kinv = num::cholesky_inverse(f);
    double g_sf = 0.0, trace_w = 0.0;
    std::vector<double> g_l(d_, 0.0);
    p = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double wii = kinv(i, i) - a[i] * a[i];
      trace_w += wii;
      g_sf += wii * sf2;
      for (std::size_t j = 0; j < i; ++j, ++p) {
        const double wij = kinv(i, j) - a[i] * a[j];
        const double kij = ky(i, j);
        g_sf += 2.0 * wij * kij;
        if (r[p] > 0.0) {
          // dK/dlog l_m = K (x_m diff)^2 / (l_m^2 r); pair counted twice, halved by 0.5.
          const double c = wij * kij / r[p];
          for (std::size_t m = 0; m < d_; ++m) g_l[m] += c * sq_[p * d_ + m] * inv_l2[m];
        }
      }
    }
    out.gradient[0] = g_sf;  // 0.5 tr(W * 2K)
    for (std::size_t m = 0; m < d_; ++m) out.gradient[1 + m] = g_l[m];
    out.gradient[d_ + 1] = sn2 * trace_w;  // 0.5 tr(W * 2 sn^2 I)
    double sum_a = 0.0;
    for (double v : a) sum_a += v;
    out.gradient[d_ + 2] = -sum_a;
    return out;
  }

 private:
  std::size_t n_, d_;
  Vector y_;
  double jitter_rel_;
  std::vector<double> sq_;  // lower-triangle pairs x d
};

}  // namespace detail

inline NlmlResult neg_log_marginal_likelihood(const GprHyperparams& h, const DenseMatrix& x,
                                              std::span<const double> y, double max_jitter_relative = 1e-6) {
  h.validate();
  if (x.cols() != h.dims()) fail(ErrorCode::dimension_mismatch, "nlml: input width differs from length scales");
  return detail::NlmlEvaluator(x, y, max_jitter_relative)(h);
}

// ---------------------------------------------------------------------------
// Fitting and prediction

// Builds the cached factorization for fixed hyperparameters.
inline GprModel make_model(const GprHyperparams& hyper, const DenseMatrix& x, std::span<const double> y,
                           Standardization standardization, double max_jitter_relative = 1e-6) {
  hyper.validate();
  if (x.rows() != y.size()) fail(ErrorCode::dimension_mismatch, "gpr: x and y row counts differ");
  if (x.cols() != hyper.dims()) fail(ErrorCode::dimension_mismatch, "gpr: input width differs from length scales");
  GprModel m;
  m.hyper = hyper;
  m.x_train = x;
  m.y_train.assign(y.begin(), y.end());
  m.standardization = std::move(standardization);
  m.max_jitter_relative = max_jitter_relative;
  m.x_kernel = m.standardization.apply(x);
  DenseMatrix ky = gram(m.x_kernel, hyper);
  const double sn2 = hyper.noise_std * hyper.noise_std;
  for (std::size_t i = 0; i < ky.rows(); ++i) ky(i, i) += sn2;
  m.chol = num::cholesky(ky, max_jitter_relative * (hyper.signal_std * hyper.signal_std + sn2));
  Vector resid(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - hyper.constant_mean;
  m.alpha = num::cholesky_solve(m.chol, resid);
  return m;
}

// Starting point: beta = 1000, sn = 100, sf = std(y), l_m = std of column m
// as the kernel sees it. Degenerate spreads fall back to 1.
inline GprHyperparams default_init(const DenseMatrix& x_kernel, std::span<const double> y) {
  GprHyperparams h;
  h.constant_mean = 1000.0;
  h.noise_std = 100.0;
  const double sy = num::sample_std(y);
  h.signal_std = sy > 0.0 ? sy : 1.0;
  h.length_scales.assign(x_kernel.cols(), 1.0);
  for (std::size_t j = 0; j < x_kernel.cols(); ++j) {
    const double s = num::sample_std(x_kernel.column(j));
    if (s > 0.0) h.length_scales[j] = s;
  }
  return h;
}

inline GprHyperparams default_init(const DenseMatrix& x, std::span<const double> y, const GprConfig& cfg) {
  const Standardization s = cfg.standardize ? Standardization::fit(x) : Standardization{};
  return default_init(s.apply(x), y);
}

inline GprModel fit_gpr(const DenseMatrix& x, std::span<const double> y, const GprHyperparams& init,
                        const GprConfig& cfg = {}) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) fail(ErrorCode::invalid_argument, "fit_gpr: need at least 2 training rows");
  if (y.size() != n) fail(ErrorCode::dimension_mismatch, "fit_gpr: x and y row counts differ");
  if (init.dims() != d) fail(ErrorCode::dimension_mismatch, "fit_gpr: init length scales differ from input width");
  init.validate();

  Standardization standardization = cfg.standardize ? Standardization::fit(x) : Standardization{};
  const DenseMatrix xk = standardization.apply(x);
  const detail::NlmlEvaluator nlml(xk, y, cfg.max_jitter_relative);

  // beta is optimized in units of std(y) to keep the parameter vector
  // comparably scaled.
  double beta_scale = num::sample_std(y);
  if (!(beta_scale > 0.0)) beta_scale = std::max(1.0, std::abs(num::mean(y)));

  const auto unpack = [&](std::span<const double> t) {
    GprHyperparams h;
    h.signal_std = std::exp(t[0]);
    h.length_scales.resize(d);
    for (std::size_t m = 0; m < d; ++m) h.length_scales[m] = std::exp(t[1 + m]);
    h.noise_std = std::exp(t[d + 1]);
    h.constant_mean = t[d + 2] * beta_scale;
    return h;
  };

  Vector theta0(d + 3);
  theta0[0] = std::log(init.signal_std);
  for (std::size_t m = 0; m < d; ++m) theta0[1 + m] = std::log(init.length_scales[m]);
  theta0[d + 1] = std::log(init.noise_std);
  theta0[d + 2] = init.constant_mean / beta_scale;

  const num::Objective objective = [&](std::span<const double> t, std::span<double> g) -> double {
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t[i]) || (i < d + 2 && std::abs(t[i]) > 100.0)) return std::numeric_limits<double>::infinity();
    const GprHyperparams h = unpack(t);
    if (!(h.signal_std > 0.0 && h.noise_std > 0.0)) return std::numeric_limits<double>::infinity();
    for (double l : h.length_scales)
      if (!(l > 0.0) || !std::isfinite(l)) return std::numeric_limits<double>::infinity();
    try {
      const NlmlResult r = nlml(h);
      for (std::size_t i = 0; i < d + 2; ++i) g[i] = r.gradient[i];
      g[d + 2] = r.gradient[d + 2] * beta_scale;
      return r.value;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const num::MinimizeResult best = num::minimize(objective, theta0, cfg.minimizer);
  GprModel model = make_model(unpack(best.x), x, y, std::move(standardization), cfg.max_jitter_relative);
  model.nlml = best.value;
  model.converged = best.converged;
  return model;
}

inline GprModel fit_gpr(const DenseMatrix& x, std::span<const double> y, const GprConfig& cfg = {}) {
  return fit_gpr(x, y, default_init(x, y, cfg), cfg);
}

struct Prediction {
  Vector mean;
  Vector std;  // includes the noise term
};

inline Prediction predict_gpr(const GprModel& model, const DenseMatrix& x_new) {
  if (x_new.cols() != model.x_train.cols())
    fail(ErrorCode::dimension_mismatch, "predict_gpr: expected " + std::to_string(model.x_train.cols()) +
                                            " columns, got " + std::to_string(x_new.cols()));
  const DenseMatrix xq = model.standardization.apply(x_new);
  const auto& h = model.hyper;
  const double sf2 = h.signal_std * h.signal_std;
  const double sn2 = h.noise_std * h.noise_std;
  const std::size_t n = model.x_kernel.rows();
  Prediction out;
  out.mean.resize(xq.rows());
  out.std.resize(xq.rows());
  Vector ks(n);
  for (std::size_t q = 0; q < xq.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i) ks[i] = ard_exponential(xq.row(q), model.x_kernel.row(i), h);
    out.mean[q] = h.constant_mean + num::dot(ks, model.alpha);
    const Vector v = num::solve_lower(model.chol.lower, ks);
    const double latent = std::max(0.0, sf2 - num::dot(v, v));
    out.std[q] = std::sqrt(latent + sn2);
  }
  return out;
}

// exp(-l_m) normalized to sum to one. Evaluated relative to the smallest
// length scale so that large scales cannot underflow every term.
inline Vector gpr_predictor_weights(const GprModel& model) {
  const auto& ls = model.hyper.length_scales;
  if (ls.empty()) fail(ErrorCode::invalid_argument, "gpr_predictor_weights: model has no inputs");
  const double l_min = *std::min_element(ls.begin(), ls.end());
  Vector w;
  double total = 0.0;
  for (double l : ls) {
    w.push_back(std::exp(-(l - l_min)));
    total += w.back();
  }
  for (double& v : w) v /= total;
  return w;
}

// ---------------------------------------------------------------------------
// Serialization ("gpr/1")

inline nlohmann::json to_json(const GprModel& m) {
  using nlohmann::json;
  json x = json::array();
  for (std::size_t i = 0; i < m.x_train.rows(); ++i) x.push_back(Vector(m.x_train.row(i).begin(), m.x_train.row(i).end()));
  return {{"schema", "gpr/1"},
          {"hyper",
           {{"signal_std", m.hyper.signal_std},
            {"length_scales", m.hyper.length_scales},
            {"noise_std", m.hyper.noise_std},
            {"constant_mean", m.hyper.constant_mean}}},
          {"x_train", x},
          {"y_train", m.y_train},
          {"standardization",
           {{"enabled", !m.standardization.empty()},
            {"means", m.standardization.means},
            {"stds", m.standardization.stds}}},
          {"max_jitter_relative", m.max_jitter_relative},
          {"nlml", m.nlml},
          {"converged", m.converged}};
}

inline GprModel gpr_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != "gpr/1") fail(ErrorCode::schema, "gpr model: unsupported schema");
    GprHyperparams h;
    const auto& hj = j.at("hyper");
    h.signal_std = hj.at("signal_std").get<double>();
    h.length_scales = hj.at("length_scales").get<std::vector<double>>();
    h.noise_std = hj.at("noise_std").get<double>();
    h.constant_mean = hj.at("constant_mean").get<double>();
    const auto rows = j.at("x_train").get<std::vector<Vector>>();
    const DenseMatrix x = DenseMatrix::from_rows(rows);
    const Vector y = j.at("y_train").get<Vector>();
    Standardization s;
    const auto& sj = j.at("standardization");
    if (sj.at("enabled").get<bool>()) {
      s.means = sj.at("means").get<std::vector<double>>();
      s.stds = sj.at("stds").get<std::vector<double>>();
    }
    GprModel m = make_model(h, x, y, std::move(s), j.value("max_jitter_relative", 1e-6));
    m.nlml = j.value("nlml", 0.0);
    m.converged = j.value("converged", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("gpr model: ") + e.what());
  }
}

}  // namespace cyclife::gpr
