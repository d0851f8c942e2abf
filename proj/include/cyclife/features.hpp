#pragma once

// The seven early-life features, computed either from voltage-resolved
// discharge curves or from per-cycle summaries only (replicating the original
// analysis script, including its fleet-wide delta-Q columns).

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyclife/cell_data.hpp"
#include "cyclife/csv.hpp"
#include "cyclife/error.hpp"
#include "cyclife/numerics.hpp"
#include "cyclife/parallel.hpp"

namespace cyclife::features {

// p points spaced uniformly from v_max down to v_min.
struct VoltageGrid {
  double v_min = 2.0;
  double v_max = 3.5;
  std::size_t p = 1000;

  void validate() const {
    if (!(v_min < v_max)) fail(ErrorCode::invalid_argument, "voltage grid: v_min must be < v_max");
    if (p < 2) fail(ErrorCode::invalid_argument, "voltage grid: p must be >= 2");
  }

  double voltage(std::size_t i) const {
    if (i + 1 == p) return v_min;
    return v_max - (v_max - v_min) * static_cast<double>(i) / static_cast<double>(p - 1);
  }
};

struct DeltaQ {
  std::vector<double> values;  // Ah, one per grid point
};

inline constexpr std::size_t kFeatureCount = 7;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "min_delta_q", "var_delta_q", "ir_diff", "avg_charge_time", "t_max", "slope_discharge", "t_integral"};

struct FeatureVector {
  double min_delta_q = 0.0;      // log10 Ah
  double var_delta_q = 0.0;      // log10 Ah^2
  double ir_diff = 0.0;          // Ohm
  double avg_charge_time = 0.0;  // minutes
  double t_max = 0.0;            // degC
  double slope_discharge = 0.0;  // Ah / cycle
  double t_integral = 0.0;       // degC * cycle

  std::array<double, kFeatureCount> values() const {
    return {min_delta_q, var_delta_q, ir_diff, avg_charge_time, t_max, slope_discharge, t_integral};
  }

  static FeatureVector from_values(std::span<const double> v) {
    if (v.size() != kFeatureCount) fail(ErrorCode::dimension_mismatch, "feature vector needs 7 values");
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }

  bool all_finite() const {
    for (double x : values())
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const FeatureVector&) const = default;
};

enum class FeatureMode { voltage_resolved, paper_faithful };

inline std::string_view to_string(FeatureMode m) {
  return m == FeatureMode::voltage_resolved ? "voltage-resolved" : "paper-faithful";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "voltage-resolved" || s == "voltage_resolved") return FeatureMode::voltage_resolved;
  if (s == "paper-faithful" || s == "paper_faithful") return FeatureMode::paper_faithful;
  fail(ErrorCode::usage, "unknown feature mode '" + std::string(s) + "'");
}

// Abscissa for the temperature integral. Cycle number is the default; the
// alternative integrates against cumulative charge time in minutes.
enum class TemperatureAbscissa { cycle, cumulative_charge_time };

struct FeatureOptions {
  int window_first = 2;    // first cycle of the early-life window
  int window_last = 100;   // last cycle of the early-life window
  int dq_high = 100;       // delta-Q = Q(dq_high) - Q(dq_low), voltage-resolved
  int dq_low = 10;
  int charge_first = 2;    // charge-time average window
  int charge_last = 6;
  TemperatureAbscissa abscissa = TemperatureAbscissa::cycle;
  bool drop_censored = false;
  unsigned threads = 1;
};

struct Reject {
  std::string cell_id;
  std::string reason;

  bool operator==(const Reject&) const = default;
};

struct FeatureMatrix {
  std::vector<FeatureVector> rows;
  std::vector<double> labels;
  std::vector<bool> censored;
  std::vector<std::string> cell_ids;
  FeatureMode mode = FeatureMode::voltage_resolved;
  std::vector<Reject> rejects;

  std::size_t size() const noexcept { return rows.size(); }

  num::DenseMatrix matrix() const {
    num::DenseMatrix x(rows.size(), kFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto v = rows[i].values();
      for (std::size_t j = 0; j < kFeatureCount; ++j) x(i, j) = v[j];
    }
    return x;
  }
};

// ---------------------------------------------------------------------------
// Per-feature operations

// Piecewise-linear capacity at each grid voltage; values beyond the curve's
// voltage span are clamped to the nearest endpoint.
inline std::vector<double> resample_capacity(const data::DischargeCurve& curve, const VoltageGrid& grid) {
  grid.validate();
  const auto& s = curve.samples;
  if (s.size() < 2)
    fail(ErrorCode::invalid_argument,
         "resample_capacity: cycle " + std::to_string(curve.cycle_index) + " has fewer than 2 samples");
  std::vector<double> out(grid.p);
  std::size_t k = 0;  // segment [k, k+1]; grid voltages descend so k only grows
  for (std::size_t i = 0; i < grid.p; ++i) {
    const double v = grid.voltage(i);
    if (v >= s.front().voltage) {
      out[i] = s.front().q_discharge;
      continue;
    }
    if (v <= s.back().voltage) {
      out[i] = s.back().q_discharge;
      continue;
    }
    while (s[k + 1].voltage > v) ++k;
    const double v0 = s[k].voltage, v1 = s[k + 1].voltage;
    const double w = (v0 - v) / (v0 - v1);
    out[i] = s[k].q_discharge + w * (s[k + 1].q_discharge - s[k].q_discharge);
  }
  return out;
}

inline DeltaQ delta_q(const data::CellRecord& cell, const VoltageGrid& grid, int hi = 100, int lo = 10) {
  for (int c : {hi, lo})
    if (!cell.has_curve(c))
      fail(ErrorCode::missing_curve, cell.cell_id + ": missing discharge curve at cycle " + std::to_string(c));
  auto q_hi = resample_capacity(cell.curves.at(hi), grid);
  const auto q_lo = resample_capacity(cell.curves.at(lo), grid);
  for (std::size_t i = 0; i < q_hi.size(); ++i) q_hi[i] -= q_lo[i];
  return {std::move(q_hi)};
}

inline double feat_min_delta_q(const DeltaQ& dq) {
  if (dq.values.empty()) fail(ErrorCode::degenerate_delta_q, "degenerate ΔQ: empty");
  double m = dq.values.front();
  for (double v : dq.values) m = std::min(m, v);
  if (m == 0.0) fail(ErrorCode::degenerate_delta_q, "degenerate ΔQ: minimum is zero");
  return std::log10(std::abs(m));
}

inline double feat_var_delta_q(const DeltaQ& dq) {
  const std::size_t p = dq.values.size();
  if (p < 2) fail(ErrorCode::degenerate_delta_q, "degenerate ΔQ: fewer than 2 values");
  const double m = num::mean(dq.values);
  double s = 0.0;
  for (double v : dq.values) s += (v - m) * (v - m);
  const double var = s / static_cast<double>(p - 1);
  if (!(var > 0.0)) fail(ErrorCode::degenerate_delta_q, "degenerate ΔQ: zero variance");
  return std::log10(var);
}

// Slope of the ordinary least-squares line through (x, y).
inline double linear_fit_slope(std::span<const double> x, std::span<const double> y) {
  num::DenseMatrix design(x.size(), 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    design(i, 0) = x[i];
    design(i, 1) = 1.0;
  }
  return num::solve_lls(design, y)[0];
}

namespace detail {

inline void require_cycles(const data::CellRecord& cell, int needed) {
  if (static_cast<int>(cell.cycle_count()) < needed)
    fail(ErrorCode::insufficient_cycles, cell.cell_id + ": needs at least " + std::to_string(needed) +
                                             " cycles, has " + std::to_string(cell.cycle_count()));
}

}  // namespace detail

inline double feat_slope_discharge(const data::CellRecord& cell, int first = 2, int last = 100) {
  detail::require_cycles(cell, last);
  std::vector<double> x, y;
  for (int c = first; c <= last; ++c) {
    x.push_back(static_cast<double>(cell.cycle(c).cycle_index));
    y.push_back(cell.cycle(c).q_discharge);
  }
  return linear_fit_slope(x, y);
}

inline double feat_avg_charge_time(const data::CellRecord& cell, int first = 2, int last = 6) {
  detail::require_cycles(cell, last);
  double s = 0.0;
  for (int c = first; c <= last; ++c) s += cell.cycle(c).charge_time;
  return s / static_cast<double>(last - first + 1);
}

inline double feat_max_temp(const data::CellRecord& cell, int first = 2, int last = 100) {
  detail::require_cycles(cell, last);
  double m = cell.cycle(first).t_max;
  for (int c = first; c <= last; ++c) m = std::max(m, cell.cycle(c).t_max);
  return m;
}

inline double feat_ir_diff(const data::CellRecord& cell, int first = 2, int last = 100) {
  detail::require_cycles(cell, last);
  return cell.cycle(last).internal_resistance - cell.cycle(first).internal_resistance;
}

inline double feat_temp_integral(const data::CellRecord& cell, int first = 2, int last = 100,
                                 TemperatureAbscissa abscissa = TemperatureAbscissa::cycle) {
  detail::require_cycles(cell, last);
  std::vector<double> x, y;
  double elapsed = 0.0;
  for (int c = 1; c <= last; ++c) {
    elapsed += cell.cycle(c).charge_time;
    if (c < first) continue;
    x.push_back(abscissa == TemperatureAbscissa::cycle ? static_cast<double>(cell.cycle(c).cycle_index)
                                                       : elapsed);
    y.push_back(cell.cycle(c).t_avg);
  }
  return num::trapezoid(x, y);
}

// ---------------------------------------------------------------------------
// Matrix assembly

namespace detail {

struct CellOutcome {
  FeatureVector features;
  double scalar_delta_q = 0.0;  // summary-capacity difference, paper-faithful mode
  std::optional<std::string> error;
};

inline CellOutcome extract(const data::CellRecord& cell, const VoltageGrid& grid, FeatureMode mode,
                           const FeatureOptions& o) {
  CellOutcome out;
  try {
    FeatureVector& f = out.features;
    if (mode == FeatureMode::voltage_resolved) {
      const DeltaQ dq = delta_q(cell, grid, o.dq_high, o.dq_low);
      f.min_delta_q = feat_min_delta_q(dq);
      f.var_delta_q = feat_var_delta_q(dq);
    } else {
      require_cycles(cell, o.window_last);
      out.scalar_delta_q = cell.cycle(o.window_last).q_discharge - cell.cycle(o.window_first).q_discharge;
    }
    f.ir_diff = feat_ir_diff(cell, o.window_first, o.window_last);
    f.avg_charge_time = feat_avg_charge_time(cell, o.charge_first, o.charge_last);
    f.t_max = feat_max_temp(cell, o.window_first, o.window_last);
    f.slope_discharge = feat_slope_discharge(cell, o.window_first, o.window_last);
    f.t_integral = feat_temp_integral(cell, o.window_first, o.window_last, o.abscissa);
    if (mode == FeatureMode::voltage_resolved && !f.all_finite())
      fail(ErrorCode::non_finite, "non-finite feature value");
  } catch (const Error& e) {
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return out;
}

}  // namespace detail

inline FeatureMatrix build_feature_matrix(const data::Dataset& ds, const VoltageGrid& grid, FeatureMode mode,
                                          const FeatureOptions& options = {}) {
  grid.validate();
  if (mode == FeatureMode::voltage_resolved) {
    bool any_curves = false;
    for (const auto& c : ds.cells) any_curves = any_curves || !c.curves.empty();
    if (!any_curves)
      fail(ErrorCode::missing_curve, "curves required: voltage-resolved features need discharge curves");
  }

  FeatureMatrix fm;
  fm.mode = mode;
  std::vector<const data::CellRecord*> candidates;
  std::vector<data::CycleLife> labels;
  for (const auto& cell : ds.cells) {
    if (cell.excluded) {
      fm.rejects.push_back({cell.cell_id, "excluded: " + cell.exclusion_reason});
      continue;
    }
    if (cell.cycles.empty()) {
      fm.rejects.push_back({cell.cell_id, "no cycles"});
      continue;
    }
    const auto label = data::cycle_life_label(cell, ds.eol_threshold);
    if (label.censored && options.drop_censored) {
      fm.rejects.push_back({cell.cell_id, "censored"});
      continue;
    }
    candidates.push_back(&cell);
    labels.push_back(label);
  }

  std::vector<detail::CellOutcome> outcomes(candidates.size());
  parallel_for(candidates.size(), options.threads, [&](std::size_t i) {
    outcomes[i] = detail::extract(*candidates[i], grid, mode, options);
  });

  std::vector<double> scalar_dq;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (outcomes[i].error) {
      fm.rejects.push_back({candidates[i]->cell_id, *outcomes[i].error});
      continue;
    }
    fm.rows.push_back(outcomes[i].features);
    fm.labels.push_back(static_cast<double>(labels[i].cycles));
    fm.censored.push_back(labels[i].censored);
    fm.cell_ids.push_back(candidates[i]->cell_id);
    scalar_dq.push_back(outcomes[i].scalar_delta_q);
  }
  if (fm.rows.empty()) fail(ErrorCode::empty_result, "feature matrix is empty: every cell was rejected");

  if (mode == FeatureMode::paper_faithful) {
    // One fleet-wide value per column, replicated across rows. The variance
    // deliberately subtracts the log-scale mean from the raw differences.
    const std::size_t n = scalar_dq.size();
    if (n < 2) fail(ErrorCode::empty_result, "paper-faithful features need at least 2 cells");
    double min_dq = scalar_dq.front();
    double mean_abs = 0.0;
    for (double v : scalar_dq) {
      min_dq = std::min(min_dq, v);
      mean_abs += std::abs(v);
    }
    mean_abs /= static_cast<double>(n);
    const double min_col = std::log10(std::abs(min_dq));
    const double mean_log = std::log10(mean_abs);
    double ss = 0.0;
    for (double v : scalar_dq) ss += (v - mean_log) * (v - mean_log);
    const double var_col = std::log10(std::abs(ss / static_cast<double>(n - 1)));
    if (!std::isfinite(min_col) || !std::isfinite(var_col))
      fail(ErrorCode::degenerate_delta_q, "degenerate ΔQ: fleet-wide summary difference is zero");
    for (auto& row : fm.rows) {
      row.min_delta_q = min_col;
      row.var_delta_q = var_col;
    }
    for (std::size_t i = 0; i < fm.rows.size(); ++i)
      if (!fm.rows[i].all_finite()) fail(ErrorCode::non_finite, fm.cell_ids[i] + ": non-finite feature value");
  }
  return fm;
}

// ---------------------------------------------------------------------------
// features.csv / features.rejects.csv

inline std::vector<std::string> features_header() {
  std::vector<std::string> h{"cell_id", "label", "censored"};
  for (auto name : kFeatureNames) h.emplace_back(name);
  return h;
}

inline void write_features(const std::filesystem::path& dir, const FeatureMatrix& fm) {
  csv::Writer w(features_header());
  for (std::size_t i = 0; i < fm.size(); ++i) {
    std::vector<std::string> row{fm.cell_ids[i], csv::format_double(fm.labels[i]), fm.censored[i] ? "1" : "0"};
    for (double v : fm.rows[i].values()) row.push_back(csv::format_double(v));
    w.row(row);
  }
  w.save(dir / "features.csv");

  csv::Writer r({"cell_id", "reason"});
  for (const auto& rej : fm.rejects) {
    std::string reason = rej.reason;
    for (char& ch : reason)
      if (ch == ',' || ch == '\n') ch = ';';
    r.row({rej.cell_id, reason});
  }
  r.save(dir / "features.rejects.csv");
}

inline FeatureMatrix read_features(const std::filesystem::path& path, FeatureMode mode) {
  const auto t = csv::read_table(path, features_header());
  FeatureMatrix fm;
  fm.mode = mode;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    fm.cell_ids.push_back(t.rows[r][0]);
    fm.labels.push_back(t.number(r, 1));
    fm.censored.push_back(t.integer(r, 2) != 0);
    std::array<double, kFeatureCount> v{};
    for (std::size_t j = 0; j < kFeatureCount; ++j) v[j] = t.number(r, 3 + j);
    fm.rows.push_back(FeatureVector::from_values(v));
  }
  if (fm.rows.empty()) fail(ErrorCode::empty_result, path.string() + ": no feature rows");
  return fm;
}

}  // namespace cyclife::features
