#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyclife/csv.hpp"
#include "cyclife/error.hpp"

namespace cyclife::eval {

namespace detail {

inline void check_lengths(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) fail(ErrorCode::dimension_mismatch, std::string(what) + ": length mismatch");
  if (y.empty()) fail(ErrorCode::invalid_argument, std::string(what) + ": no observations");
}

}  // namespace detail

// Root-mean-squared error, in the units of y (cycles).
inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  detail::check_lengths(y, yhat, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

// Mean absolute percentage error relative to the observations.
inline double pct_err(std::span<const double> y, std::span<const double> yhat) {
  detail::check_lengths(y, yhat, "pct_err");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) fail(ErrorCode::invalid_argument, "pct_err: observation " + std::to_string(i) + " is zero");
    s += std::abs((y[i] - yhat[i]) / y[i]);
  }
  return s * 100.0 / static_cast<double>(y.size());
}

struct SeriesRow {
  int rank = 0;  // 1-based position after sorting by observed life
  double observed = 0.0;
  double predicted = 0.0;
  std::optional<double> std_lower;
  std::optional<double> std_upper;

  bool operator==(const SeriesRow&) const = default;
};

struct EvaluationReport {
  std::string model_name;
  std::string split = "train";
  double rmse = 0.0;
  double pct_err = 0.0;
  std::vector<double> observed;   // input order
  std::vector<double> predicted;  // input order
  std::vector<double> residuals;  // observed - predicted, input order
  std::vector<SeriesRow> sorted_series;
  std::size_t n = 0;

  bool operator==(const EvaluationReport&) const = default;
};

// Residuals are observed - predicted. The sorted series orders rows by
// ascending observed life (stable), with +/-1 std bands when std is given.
inline EvaluationReport build_report(const std::string& name, std::span<const double> y, std::span<const double> yhat,
                                     std::optional<std::span<const double>> std = std::nullopt,
                                     const std::string& split = "train") {
  EvaluationReport r;
  r.model_name = name;
  r.split = split;
  r.rmse = rmse(y, yhat);
  r.pct_err = pct_err(y, yhat);
  r.n = y.size();
  r.observed.assign(y.begin(), y.end());
  r.predicted.assign(yhat.begin(), yhat.end());
  if (std && std->size() != y.size()) fail(ErrorCode::dimension_mismatch, "build_report: std length mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) r.residuals.push_back(y[i] - yhat[i]);

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    SeriesRow row{static_cast<int>(k) + 1, y[i], yhat[i], std::nullopt, std::nullopt};
    if (std) {
      row.std_lower = yhat[i] - (*std)[i];
      row.std_upper = yhat[i] + (*std)[i];
    }
    r.sorted_series.push_back(row);
  }
  return r;
}

// ---------------------------------------------------------------------------
// CSV emission

inline void write_metrics(const std::filesystem::path& dir, const std::vector<EvaluationReport>& reports) {
  csv::Writer w({"model", "rmse_cycles", "pct_err"});
  for (const auto& r : reports) w.row({r.model_name, csv::format_double(r.rmse), csv::format_double(r.pct_err)});
  w.save(dir / "metrics.csv");
}

// report_<model>.csv, residuals_<model>.csv and scatter_<model>.csv.
inline void write_report(const std::filesystem::path& dir, const EvaluationReport& r) {
  using csv::format_double;
  csv::Writer series({"rank", "observed", "predicted", "std_lower", "std_upper"});
  for (const auto& row : r.sorted_series)
    series.row({std::to_string(row.rank), format_double(row.observed), format_double(row.predicted),
                row.std_lower ? format_double(*row.std_lower) : "", row.std_upper ? format_double(*row.std_upper) : ""});
  series.save(dir / ("report_" + r.model_name + ".csv"));

  csv::Writer res({"index", "observed", "predicted", "residual", "split"});
  for (std::size_t i = 0; i < r.n; ++i)
    res.row({std::to_string(i), format_double(r.observed[i]), format_double(r.predicted[i]),
             format_double(r.residuals[i]), r.split});
  res.save(dir / ("residuals_" + r.model_name + ".csv"));

  csv::Writer scatter({"observed", "predicted"});
  for (std::size_t i = 0; i < r.n; ++i) scatter.row({format_double(r.observed[i]), format_double(r.predicted[i])});
  scatter.save(dir / ("scatter_" + r.model_name + ".csv"));
}

// Inverse of write_report + the model's row in metrics.csv.
inline EvaluationReport read_report(const std::filesystem::path& dir, const std::string& model_name) {
  EvaluationReport r;
  r.model_name = model_name;

  const auto metrics = csv::read_table(dir / "metrics.csv", {"model", "rmse_cycles", "pct_err"});
  bool found = false;
  for (std::size_t i = 0; i < metrics.rows.size(); ++i) {
    if (metrics.rows[i][0] != model_name) continue;
    r.rmse = metrics.number(i, 1);
    r.pct_err = metrics.number(i, 2);
    found = true;
  }
  if (!found) fail(ErrorCode::schema, (dir / "metrics.csv").string() + ": no row for model '" + model_name + "'");

  const auto res = csv::read_table(dir / ("residuals_" + model_name + ".csv"),
                                   {"index", "observed", "predicted", "residual", "split"});
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    r.observed.push_back(res.number(i, 1));
    r.predicted.push_back(res.number(i, 2));
    r.residuals.push_back(res.number(i, 3));
    r.split = res.rows[i][4];
  }
  r.n = r.observed.size();

  const auto series = csv::read_table(dir / ("report_" + model_name + ".csv"),
                                      {"rank", "observed", "predicted", "std_lower", "std_upper"});
  for (std::size_t i = 0; i < series.rows.size(); ++i) {
    SeriesRow row;
    row.rank = static_cast<int>(series.integer(i, 0));
    row.observed = series.number(i, 1);
    row.predicted = series.number(i, 2);
    if (!series.rows[i][3].empty()) row.std_lower = series.number(i, 3);
    if (!series.rows[i][4].empty()) row.std_upper = series.number(i, 4);
    r.sorted_series.push_back(row);
  }
  return r;
}

}  // namespace cyclife::eval
