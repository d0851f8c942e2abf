#pragma once

// End-to-end orchestration: features -> GPR / ENR fits -> evaluation ->
// artifact files. The CLI is a thin layer over these functions.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cyclife/cell_data.hpp"
#include "cyclife/csv.hpp"
#include "cyclife/enr.hpp"
#include "cyclife/error.hpp"
#include "cyclife/evalmetrics.hpp"
#include "cyclife/features.hpp"
#include "cyclife/gpr.hpp"

namespace cyclife::app {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "0.1.0";

enum class ModelChoice { gpr, enr, both };
enum class SplitMode { train, holdout };

inline ModelChoice parse_model_choice(std::string_view s) {
  if (s == "gpr") return ModelChoice::gpr;
  if (s == "enr") return ModelChoice::enr;
  if (s == "both") return ModelChoice::both;
  fail(ErrorCode::usage, "unknown model '" + std::string(s) + "' (expected gpr, enr or both)");
}

inline std::string_view to_string(ModelChoice m) {
  return m == ModelChoice::gpr ? "gpr" : m == ModelChoice::enr ? "enr" : "both";
}

inline SplitMode parse_split(std::string_view s) {
  if (s == "train") return SplitMode::train;
  if (s == "holdout") return SplitMode::holdout;
  fail(ErrorCode::usage, "unknown split '" + std::string(s) + "' (expected train or holdout)");
}

struct PipelineOptions {
  features::FeatureMode mode = features::FeatureMode::voltage_resolved;
  features::VoltageGrid grid;
  features::FeatureOptions feature_options;
  ModelChoice models = ModelChoice::both;
  SplitMode split = SplitMode::train;
  double holdout_fraction = 0.25;
  std::uint64_t split_seed = 0;
  gpr::GprConfig gpr;
  enr::EnrConfig enr;
  enr::WeightScale enr_weight_scale = enr::WeightScale::raw;

  bool wants_gpr() const { return models != ModelChoice::enr; }
  bool wants_enr() const { return models != ModelChoice::gpr; }

  // Propagates one seed and thread count to every stage.
  void set_seed(std::uint64_t seed) {
    split_seed = seed;
    gpr.minimizer.seed = seed;
    enr.seed = seed;
  }
  void set_threads(unsigned threads) {
    feature_options.threads = threads;
    gpr.minimizer.threads = threads;
    enr.threads = threads;
  }
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;  // equals train for train-set evaluation
};

// Seeded, cell-level split.
inline Split make_split(std::size_t n, const PipelineOptions& o) {
  Split s;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (o.split == SplitMode::train) {
    s.train = all;
    s.test = all;
    return s;
  }
  if (!(o.holdout_fraction > 0.0 && o.holdout_fraction < 1.0))
    fail(ErrorCode::invalid_argument, "holdout fraction must be in (0, 1)");
  std::mt19937_64 rng(o.split_seed ^ 0x5851F42D4C957F2DULL);
  for (std::size_t i = n; i > 1; --i) std::swap(all[i - 1], all[static_cast<std::size_t>(rng() % i)]);
  const auto n_test = static_cast<std::size_t>(std::ceil(o.holdout_fraction * static_cast<double>(n)));
  if (n_test < 1 || n - n_test < 2) fail(ErrorCode::invalid_argument, "holdout split leaves too few cells");
  s.test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline num::DenseMatrix rows_of(const num::DenseMatrix& x, const std::vector<std::size_t>& idx) {
  num::DenseMatrix out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(x.row(idx[i]).begin(), x.row(idx[i]).end(), out.row(i).begin());
  return out;
}

inline num::Vector values_of(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  num::Vector out;
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

struct TrainedModels {
  std::optional<gpr::GprModel> gpr;
  std::optional<enr::EnrModel> enr;
};

inline TrainedModels train_models(const features::FeatureMatrix& fm, const PipelineOptions& o) {
  const Split split = make_split(fm.size(), o);
  const num::DenseMatrix x = rows_of(fm.matrix(), split.train);
  const num::Vector y = values_of(fm.labels, split.train);
  TrainedModels t;
  if (o.wants_gpr()) t.gpr = gpr::fit_gpr(x, y, o.gpr);
  if (o.wants_enr()) t.enr = enr::fit_enr(x, y, o.enr);
  return t;
}

inline std::vector<eval::EvaluationReport> evaluate_models(const features::FeatureMatrix& fm, const TrainedModels& t,
                                                           const PipelineOptions& o) {
  const Split split = make_split(fm.size(), o);
  const num::DenseMatrix x = rows_of(fm.matrix(), split.test);
  const num::Vector y = values_of(fm.labels, split.test);
  const std::string split_name = o.split == SplitMode::train ? "train" : "holdout";
  std::vector<eval::EvaluationReport> reports;
  if (t.gpr) {
    const auto pred = gpr::predict_gpr(*t.gpr, x);
    reports.push_back(eval::build_report("gpr", y, pred.mean, std::span<const double>(pred.std), split_name));
  }
  if (t.enr) {
    const auto pred = enr::predict_enr(*t.enr, x);
    reports.push_back(eval::build_report("enr", y, pred, std::nullopt, split_name));
  }
  return reports;
}

struct PipelineResult {
  features::FeatureMatrix features;
  TrainedModels models;
  std::vector<eval::EvaluationReport> reports;

  const eval::EvaluationReport* report(std::string_view name) const {
    for (const auto& r : reports)
      if (r.model_name == name) return &r;
    return nullptr;
  }
};

inline PipelineResult run_pipeline(const data::Dataset& ds, const PipelineOptions& o) {
  PipelineResult r;
  r.features = features::build_feature_matrix(ds, o.grid, o.mode, o.feature_options);
  r.models = train_models(r.features, o);
  r.reports = evaluate_models(r.features, r.models, o);
  return r;
}

// ---------------------------------------------------------------------------
// Artifact files

inline void write_weights(const fs::path& path, const num::Vector& w) {
  csv::Writer out({"feature", "weight"});
  for (std::size_t j = 0; j < w.size(); ++j)
    out.row({std::string(j < features::kFeatureCount ? features::kFeatureNames[j] : "x" + std::to_string(j)),
             csv::format_double(w[j])});
  out.save(path);
}

inline void write_models(const fs::path& dir, const TrainedModels& t, const PipelineOptions& o) {
  if (t.gpr) {
    csv::write_text(dir / "gpr_model.json", gpr::to_json(*t.gpr).dump(2) + "\n");
    write_weights(dir / "weights_gpr.csv", gpr::gpr_predictor_weights(*t.gpr));
  }
  if (t.enr) {
    csv::write_text(dir / "enr_model.json", enr::to_json(*t.enr).dump(2) + "\n");
    csv::Writer cv({"lambda", "mse_mean", "mse_std"});
    for (std::size_t l = 0; l < t.enr->cv.lambdas.size(); ++l)
      cv.row({csv::format_double(t.enr->cv.lambdas[l]), csv::format_double(t.enr->cv.mse_mean[l]),
              csv::format_double(t.enr->cv.mse_std[l])});
    cv.save(dir / "cv_curve.csv");
    bool any_nonzero = false;
    for (double c : t.enr->coefficients) any_nonzero = any_nonzero || c != 0.0;
    if (any_nonzero) write_weights(dir / "weights_enr.csv", enr::enr_predictor_weights(*t.enr, o.enr_weight_scale));
  }
}

inline TrainedModels read_models(const fs::path& dir, const PipelineOptions& o) {
  TrainedModels t;
  const auto load = [](const fs::path& p) {
    try {
      return nlohmann::json::parse(csv::read_text(p));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::schema, p.string() + ": invalid JSON: " + e.what());
    }
  };
  if (o.wants_gpr()) t.gpr = gpr::gpr_from_json(load(dir / "gpr_model.json"));
  if (o.wants_enr()) t.enr = enr::enr_from_json(load(dir / "enr_model.json"));
  return t;
}

inline void write_reports(const fs::path& dir, const std::vector<eval::EvaluationReport>& reports) {
  eval::write_metrics(dir, reports);
  for (const auto& r : reports) eval::write_report(dir, r);
}

inline void write_ingest_summary(const fs::path& dir, const data::Dataset& ds) {
  csv::Writer w({"cell_id", "batch_id", "charge_policy", "cycles", "label", "censored", "excluded", "reason"});
  for (const auto& c : ds.cells) {
    const auto life = data::cycle_life_label(c, ds.eol_threshold);
    w.row({c.cell_id, c.batch_id, c.charge_policy, std::to_string(c.cycle_count()), std::to_string(life.cycles),
           life.censored ? "1" : "0", c.excluded ? "1" : "0", c.exclusion_reason});
  }
  w.save(dir / "cells.csv");
}

// Options as a JSON object, for run.json.
inline nlohmann::json options_to_json(const PipelineOptions& o) {
  return {{"feature_mode", features::to_string(o.mode)},
          {"grid", {{"v_min", o.grid.v_min}, {"v_max", o.grid.v_max}, {"points", o.grid.p}}},
          {"window", {{"first", o.feature_options.window_first}, {"last", o.feature_options.window_last},
                      {"delta_q_high", o.feature_options.dq_high}, {"delta_q_low", o.feature_options.dq_low}}},
          {"drop_censored", o.feature_options.drop_censored},
          {"temperature_abscissa",
           o.feature_options.abscissa == features::TemperatureAbscissa::cycle ? "cycle" : "cumulative-charge-time"},
          {"model", to_string(o.models)},
          {"split", o.split == SplitMode::train ? "train" : "holdout"},
          {"holdout_fraction", o.holdout_fraction},
          {"split_seed", o.split_seed},
          {"gpr",
           {{"standardize", o.gpr.standardize},
            {"restarts", o.gpr.minimizer.restarts},
            {"max_iterations", o.gpr.minimizer.max_iterations},
            {"seed", o.gpr.minimizer.seed}}},
          {"enr",
           {{"alpha", o.enr.alpha},
            {"n_lambda", o.enr.n_lambda},
            {"lambda_ratio", o.enr.lambda_ratio},
            {"folds", o.enr.folds},
            {"tolerance", o.enr.tolerance},
            {"seed", o.enr.seed}}}};
}

// Collects outputs in a private staging directory and moves them into the
// destination only on commit(); otherwise the staging directory is removed.
class OutputStage {
 public:
  explicit OutputStage(const fs::path& destination) : destination_(destination) {
    fs::create_directories(destination_);
    staging_ = destination_ / (".staging-" + std::to_string(
                                                 std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(staging_);
  }
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;
  ~OutputStage() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    for (const auto& entry : fs::directory_iterator(staging_)) {
      const fs::path target = destination_ / entry.path().filename();
      std::error_code ec;
      fs::remove_all(target, ec);
      fs::rename(entry.path(), target);
    }
  }

 private:
  fs::path destination_;
  fs::path staging_;
};

}  // namespace cyclife::app
