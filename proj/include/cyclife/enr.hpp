#pragma once

// Elastic net regression by cyclic coordinate descent over a log-spaced
// lambda path, with k-fold cross-validated lambda selection.
//
// Objective on standardized inputs and centered targets:
//   (1/(2n)) ||yc - Xs w||^2 + lambda * ((1 - alpha)/2 ||w||^2 + alpha ||w||_1)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclife/error.hpp"
#include "cyclife/numerics.hpp"
#include "cyclife/parallel.hpp"

namespace cyclife::enr {

using num::DenseMatrix;
using num::Vector;

struct EnrConfig {
  double alpha = 0.5;
  int n_lambda = 100;
  double lambda_ratio = 1e-4;
  int folds = 4;
  double tolerance = 1e-7;
  int max_passes = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorCode::invalid_argument, "enr: alpha must be in (0, 1]");
    if (folds < 2) fail(ErrorCode::invalid_argument, "enr: folds must be >= 2");
    if (n_lambda < 1) fail(ErrorCode::invalid_argument, "enr: n_lambda must be >= 1");
    if (!(lambda_ratio > 0.0 && lambda_ratio <= 1.0))
      fail(ErrorCode::invalid_argument, "enr: lambda_ratio must be in (0, 1]");
    if (!(tolerance > 0.0)) fail(ErrorCode::invalid_argument, "enr: tolerance must be > 0");
  }
};

struct Standardized {
  DenseMatrix xs;
  Vector means;
  Vector stds;
};

// Population z-scores. A zero-spread column is an error naming the column.
inline Standardized standardize(const DenseMatrix& x) {
  Standardized s{x, Vector(x.cols(), 0.0), Vector(x.cols(), 0.0)};
  const std::size_t n = x.rows();
  if (n == 0) fail(ErrorCode::invalid_argument, "standardize: no rows");
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
    const double sd = std::sqrt(v / static_cast<double>(n));
    if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(m)))
      fail(ErrorCode::constant_feature, "constant feature in column " + std::to_string(j));
    s.means[j] = m;
    s.stds[j] = sd;
    for (std::size_t i = 0; i < n; ++i) s.xs(i, j) = (x(i, j) - m) / sd;
  }
  return s;
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

struct CdResult {
  Vector w;
  int passes = 0;
  bool converged = false;
};

// Cyclic coordinate descent. `warm` seeds the coefficients (zeros if empty).
inline CdResult coordinate_descent(const DenseMatrix& xs, std::span<const double> yc, double lambda, double alpha,
                                   const EnrConfig& cfg, std::span<const double> warm = {}) {
  const std::size_t n = xs.rows(), d = xs.cols();
  if (yc.size() != n) fail(ErrorCode::dimension_mismatch, "coordinate_descent: row count mismatch");
  if (lambda < 0.0) fail(ErrorCode::invalid_argument, "coordinate_descent: lambda must be >= 0");
  const double inv_n = 1.0 / static_cast<double>(n);

  CdResult res;
  res.w.assign(d, 0.0);
  if (!warm.empty()) {
    if (warm.size() != d) fail(ErrorCode::dimension_mismatch, "coordinate_descent: warm start size mismatch");
    std::copy(warm.begin(), warm.end(), res.w.begin());
  }
  // Column-major copy for contiguous coordinate sweeps.
  std::vector<Vector> cols(d, Vector(n));
  Vector col_sq(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = xs(i, j);
    col_sq[j] = num::dot(cols[j], cols[j]) * inv_n;
  }
  Vector r(yc.begin(), yc.end());
  for (std::size_t j = 0; j < d; ++j)
    if (res.w[j] != 0.0)
      for (std::size_t i = 0; i < n; ++i) r[i] -= cols[j][i] * res.w[j];

  // The relative slack absorbs rounding between lambda_max and rho, so the
  // path head yields exact zeros.
  const double l1 = lambda * alpha * (1.0 + 1e-12);
  const double l2 = lambda * (1.0 - alpha);
  for (res.passes = 1; res.passes <= cfg.max_passes; ++res.passes) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double old = res.w[j];
      const double denom = col_sq[j] + l2;
      if (!(denom > 0.0)) continue;
      const double rho = num::dot(cols[j], r) * inv_n + col_sq[j] * old;
      const double updated = soft_threshold(rho, l1) / denom;
      const double delta = updated - old;
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) r[i] -= cols[j][i] * delta;
        res.w[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.passes = std::min(res.passes, cfg.max_passes);
  return res;
}

// Penalized objective value at w.
inline double objective(const DenseMatrix& xs, std::span<const double> yc, std::span<const double> w, double lambda,
                        double alpha) {
  const Vector fit = num::multiply(xs, w);
  double rss = 0.0;
  for (std::size_t i = 0; i < yc.size(); ++i) rss += (yc[i] - fit[i]) * (yc[i] - fit[i]);
  double l1 = 0.0, l2 = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    l2 += v * v;
  }
  return rss / (2.0 * static_cast<double>(yc.size())) + lambda * ((1.0 - alpha) / 2.0 * l2 + alpha * l1);
}

inline double lambda_max(const DenseMatrix& xs, std::span<const double> yc, double alpha) {
  const std::size_t n = xs.rows();
  double m = 0.0;
  for (std::size_t j = 0; j < xs.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs(i, j) * yc[i];
    m = std::max(m, std::abs(s));
  }
  return m / (static_cast<double>(n) * alpha);
}

// Descending, log-spaced from lambda_max to lambda_max * lambda_ratio.
inline Vector lambda_path(const DenseMatrix& xs, std::span<const double> yc, const EnrConfig& cfg) {
  cfg.validate();
  const double top = lambda_max(xs, yc, cfg.alpha);
  if (!(top > 0.0)) fail(ErrorCode::invalid_argument, "lambda_path: centered response is identically zero");
  Vector path(static_cast<std::size_t>(cfg.n_lambda));
  path[0] = top;
  if (cfg.n_lambda == 1) return path;
  const double log_top = std::log(top);
  const double step = std::log(cfg.lambda_ratio) / static_cast<double>(cfg.n_lambda - 1);
  for (int k = 1; k < cfg.n_lambda; ++k) path[static_cast<std::size_t>(k)] = std::exp(log_top + step * k);
  return path;
}

struct CvResult {
  Vector lambdas;
  Vector mse_mean;
  Vector mse_std;
  std::size_t index_min_mse = 0;
  std::vector<int> fold_assignment;
};

// Seeded shuffle, then row i of the shuffled order goes to fold i % k, so
// fold sizes differ by at most one.
inline std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<int> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  return fold;
}

namespace detail {

// Z-scores using training statistics; columns with no spread in the
// training split stay at 0 and therefore keep a zero coefficient.
struct SplitScaler {
  Vector means, stds;

  explicit SplitScaler(const DenseMatrix& x) : means(x.cols(), 0.0), stds(x.cols(), 1.0) {
    const std::size_t n = x.rows();
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += x(i, j);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      means[j] = m;
      stds[j] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 0.0;
    }
  }

  DenseMatrix apply(const DenseMatrix& x) const {
    DenseMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = stds[j] > 0.0 ? (x(i, j) - means[j]) / stds[j] : 0.0;
    return out;
  }
};

inline DenseMatrix select_rows(const DenseMatrix& x, const std::vector<std::size_t>& rows) {
  DenseMatrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

// Solutions along the whole path with warm starts.
inline std::vector<Vector> solve_path(const DenseMatrix& xs, std::span<const double> yc, const Vector& lambdas,
                                      const EnrConfig& cfg) {
  std::vector<Vector> out;
  out.reserve(lambdas.size());
  Vector w(xs.cols(), 0.0);
  for (double lambda : lambdas) {
    w = coordinate_descent(xs, yc, lambda, cfg.alpha, cfg, w).w;
    out.push_back(w);
  }
  return out;
}

}  // namespace detail

inline CvResult cross_validate(const DenseMatrix& x, std::span<const double> y, const EnrConfig& cfg) {
  cfg.validate();
  const std::size_t n = x.rows();
  if (y.size() != n) fail(ErrorCode::dimension_mismatch, "cross_validate: x and y row counts differ");
  if (n < static_cast<std::size_t>(cfg.folds)) fail(ErrorCode::invalid_argument, "cross_validate: fewer rows than folds");

  CvResult cv;
  cv.fold_assignment = assign_folds(n, cfg.folds, cfg.seed);
  for (int k = 0; k < cfg.folds; ++k) {
    const auto count = std::count(cv.fold_assignment.begin(), cv.fold_assignment.end(), k);
    if (count < 2) fail(ErrorCode::invalid_argument, "cross_validate: fold " + std::to_string(k) + " has fewer than 2 rows");
  }

  // Shared path from the full data.
  const detail::SplitScaler full(x);
  const DenseMatrix xs = full.apply(x);
  const double ym = num::mean(y);
  Vector yc(n);
  for (std::size_t i = 0; i < n; ++i) yc[i] = y[i] - ym;
  cv.lambdas = lambda_path(xs, yc, cfg);

  const std::size_t L = cv.lambdas.size();
  std::vector<Vector> fold_mse(static_cast<std::size_t>(cfg.folds), Vector(L, 0.0));
  parallel_for(static_cast<std::size_t>(cfg.folds), cfg.threads, [&](std::size_t k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (cv.fold_assignment[i] == static_cast<int>(k) ? test : train).push_back(i);
    const DenseMatrix xtr = detail::select_rows(x, train);
    const DenseMatrix xte = detail::select_rows(x, test);
    const detail::SplitScaler scaler(xtr);
    const DenseMatrix xs_tr = scaler.apply(xtr);
    const DenseMatrix xs_te = scaler.apply(xte);
    double ytr_mean = 0.0;
    for (std::size_t i : train) ytr_mean += y[i];
    ytr_mean /= static_cast<double>(train.size());
    Vector yc_tr(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) yc_tr[i] = y[train[i]] - ytr_mean;

    const auto path = detail::solve_path(xs_tr, yc_tr, cv.lambdas, cfg);
    for (std::size_t l = 0; l < L; ++l) {
      const Vector pred = num::multiply(xs_te, path[l]);
      double se = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const double e = y[test[i]] - (ytr_mean + pred[i]);
        se += e * e;
      }
      fold_mse[k][l] = se / static_cast<double>(test.size());
    }
  });

  cv.mse_mean.assign(L, 0.0);
  cv.mse_std.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    Vector per_fold(static_cast<std::size_t>(cfg.folds));
    for (std::size_t k = 0; k < per_fold.size(); ++k) per_fold[k] = fold_mse[k][l];
    cv.mse_mean[l] = num::mean(per_fold);
    cv.mse_std[l] = num::sample_std(per_fold);
  }
  // Strict comparison keeps the earliest (largest) lambda on ties.
  for (std::size_t l = 1; l < L; ++l)
    if (cv.mse_mean[l] < cv.mse_mean[cv.index_min_mse]) cv.index_min_mse = l;
  return cv;
}

struct EnrModel {
  double intercept = 0.0;      // in standardized coding: mean(y)
  Vector coefficients;         // per standardized column; zero for dropped columns
  double lambda_selected = 0.0;
  double alpha = 0.5;
  Vector feature_means;
  Vector feature_stds;
  std::vector<std::size_t> dropped_columns;
  CvResult cv;

  // Equivalent affine model on raw inputs: intercept + x . raw_coefficients.
  Vector raw_coefficients() const {
    Vector c(coefficients.size(), 0.0);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = coefficients[j] / feature_stds[j];
    return c;
  }

  double raw_intercept() const {
    double b = intercept;
    for (std::size_t j = 0; j < coefficients.size(); ++j) b -= feature_means[j] * coefficients[j] / feature_stds[j];
    return b;
  }
};

// Columns with no spread are dropped (zero coefficient), the remaining
// columns go through cross-validation, and the model is refit on all rows
// along the path down to the selected lambda.
inline EnrModel fit_enr(const DenseMatrix& x, std::span<const double> y, const EnrConfig& cfg = {}) {
  cfg.validate();
  const std::size_t d = x.cols();
  EnrModel model;
  model.alpha = cfg.alpha;

  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < d; ++j) {
    const Vector col = x.column(j);
    const double m = num::mean(col);
    double v = 0.0;
    for (double e : col) v += (e - m) * (e - m);
    const double sd = std::sqrt(v / static_cast<double>(col.size()));
    if (sd > 1e-12 * std::max(1.0, std::abs(m)))
      kept.push_back(j);
    else
      model.dropped_columns.push_back(j);
  }
  if (kept.empty()) fail(ErrorCode::constant_feature, "fit_enr: every feature column is constant");

  DenseMatrix xk(x.rows(), kept.size());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < kept.size(); ++c) xk(i, c) = x(i, kept[c]);

  model.cv = cross_validate(xk, y, cfg);
  const Standardized s = standardize(xk);
  const double ym = num::mean(y);
  Vector yc(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) yc[i] = y[i] - ym;

  Vector w(kept.size(), 0.0);
  for (std::size_t l = 0; l <= model.cv.index_min_mse; ++l)
    w = coordinate_descent(s.xs, yc, model.cv.lambdas[l], cfg.alpha, cfg, w).w;

  model.intercept = ym;
  model.lambda_selected = model.cv.lambdas[model.cv.index_min_mse];
  model.coefficients.assign(d, 0.0);
  model.feature_means.assign(d, 0.0);
  model.feature_stds.assign(d, 1.0);
  for (std::size_t c = 0; c < kept.size(); ++c) {
    model.coefficients[kept[c]] = w[c];
    model.feature_means[kept[c]] = s.means[c];
    model.feature_stds[kept[c]] = s.stds[c];
  }
  for (std::size_t j : model.dropped_columns) model.feature_means[j] = x(0, j);
  return model;
}

inline Vector predict_enr(const EnrModel& model, const DenseMatrix& x_new) {
  const std::size_t d = model.coefficients.size();
  if (x_new.cols() != d)
    fail(ErrorCode::dimension_mismatch,
         "predict_enr: expected " + std::to_string(d) + " columns, got " + std::to_string(x_new.cols()));
  Vector out(x_new.rows());
  for (std::size_t i = 0; i < x_new.rows(); ++i) {
    double v = model.intercept;
    for (std::size_t j = 0; j < d; ++j)
      v += (x_new(i, j) - model.feature_means[j]) / model.feature_stds[j] * model.coefficients[j];
    out[i] = v;
  }
  return out;
}

enum class WeightScale {
  raw,           // coefficients on the original feature units
  standardized,  // coefficients on z-scored features
};

// Signed coefficients normalized so their absolute values sum to one.
inline Vector enr_predictor_weights(const EnrModel& model, WeightScale scale = WeightScale::raw) {
  Vector w = scale == WeightScale::raw ? model.raw_coefficients() : model.coefficients;
  double total = 0.0;
  for (double v : w) total += std::abs(v);
  if (!(total > 0.0)) fail(ErrorCode::invalid_argument, "enr_predictor_weights: all coefficients are zero");
  for (double& v : w) v /= total;
  return w;
}

// ---------------------------------------------------------------------------
// Serialization ("enr/1")

inline nlohmann::json to_json(const EnrModel& m) {
  return {{"schema", "enr/1"},
          {"intercept", m.intercept},
          {"coefficients", m.coefficients},
          {"lambda", m.lambda_selected},
          {"alpha", m.alpha},
          {"feature_means", m.feature_means},
          {"feature_stds", m.feature_stds},
          {"dropped_columns", m.dropped_columns}};
}

inline EnrModel enr_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema") != "enr/1") fail(ErrorCode::schema, "enr model: unsupported schema");
    EnrModel m;
    m.intercept = j.at("intercept").get<double>();
    m.coefficients = j.at("coefficients").get<Vector>();
    m.lambda_selected = j.at("lambda").get<double>();
    m.alpha = j.at("alpha").get<double>();
    m.feature_means = j.at("feature_means").get<Vector>();
    m.feature_stds = j.at("feature_stds").get<Vector>();
    m.dropped_columns = j.at("dropped_columns").get<std::vector<std::size_t>>();
    if (m.feature_means.size() != m.coefficients.size() || m.feature_stds.size() != m.coefficients.size())
      fail(ErrorCode::schema, "enr model: inconsistent vector lengths");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("enr model: ") + e.what());
  }
}

}  // namespace cyclife::enr
