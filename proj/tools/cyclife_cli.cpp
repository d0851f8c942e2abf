// cyclife: synth | ingest | features | train | evaluate | pipeline

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyclife/cell_data.hpp"
#include "cyclife/error.hpp"
#include "cyclife/features.hpp"
#include "cyclife/pipeline.hpp"
#include "cyclife/synth.hpp"

namespace fs = std::filesystem;
using namespace cyclife;

namespace {

struct Flags {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output_dir = "out";
  std::string input;
  std::string model_dir;
  std::string model = "both";
  std::string feature_mode = "voltage-resolved";
  std::string split = "train";
  double holdout_fraction = 0.25;
  bool drop_censored = false;
  std::string temperature_abscissa = "cycle";
  int grid_points = 1000;
  int gpr_restarts = 5;
  int gpr_max_iterations = 300;
  bool gpr_standardize = true;
  double enr_alpha = 0.5;
  int enr_folds = 4;
  int enr_n_lambda = 100;
  double enr_lambda_ratio = 1e-4;
  std::string enr_weights = "raw";
  int n_cells = 124;
  int curve_cycle_limit = 100;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

app::PipelineOptions to_options(const Flags& f) {
  app::PipelineOptions o;
  o.mode = features::parse_feature_mode(f.feature_mode);
  o.models = app::parse_model_choice(f.model);
  o.split = app::parse_split(f.split);
  o.holdout_fraction = f.holdout_fraction;
  o.grid.p = f.grid_points;
  o.feature_options.drop_censored = f.drop_censored;
  if (f.temperature_abscissa == "cycle")
    o.feature_options.abscissa = features::TemperatureAbscissa::cycle;
  else if (f.temperature_abscissa == "charge-time")
    o.feature_options.abscissa = features::TemperatureAbscissa::cumulative_charge_time;
  else
    fail(ErrorCode::usage, "unknown temperature abscissa '" + f.temperature_abscissa + "'");
  o.gpr.minimizer.restarts = f.gpr_restarts;
  o.gpr.minimizer.max_iterations = f.gpr_max_iterations;
  o.gpr.standardize = f.gpr_standardize;
  o.enr.alpha = f.enr_alpha;
  o.enr.folds = f.enr_folds;
  o.enr.n_lambda = f.enr_n_lambda;
  o.enr.lambda_ratio = f.enr_lambda_ratio;
  if (f.enr_weights == "raw")
    o.enr_weight_scale = enr::WeightScale::raw;
  else if (f.enr_weights == "standardized")
    o.enr_weight_scale = enr::WeightScale::standardized;
  else
    fail(ErrorCode::usage, "unknown ENR weight scale '" + f.enr_weights + "'");
  o.set_seed(f.seed);
  o.set_threads(f.threads);
  return o;
}

void require_input(const Flags& f) {
  if (f.input.empty()) fail(ErrorCode::usage, "--input is required for this subcommand");
}

// A regular file is taken as features.csv; a directory as a dataset.
features::FeatureMatrix load_features(const Flags& f, const app::PipelineOptions& o) {
  require_input(f);
  if (fs::is_regular_file(f.input)) return features::read_features(f.input, o.mode);
  const data::Dataset ds = data::load_dataset(f.input, f.threads);
  return features::build_feature_matrix(ds, o.grid, o.mode, o.feature_options);
}

class Timer {
 public:
  void mark(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    timings_[stage] = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }
  const nlohmann::json& json() const { return timings_; }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  nlohmann::json timings_ = nlohmann::json::object();
};

void write_provenance(const fs::path& dir, const std::string& subcommand, const Flags& f,
                      const app::PipelineOptions& o, const Timer& timer, const CLI::App& cli) {
  nlohmann::json run;
  run["subcommand"] = subcommand;
  run["version"] = std::string(app::kVersion);
  run["json_library"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                        std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  run["cli_library"] = CLI11_VERSION;
  run["input"] = f.input;
  run["output_dir"] = f.output_dir;
  run["seed"] = f.seed;
  run["threads"] = f.threads;
  run["options"] = app::options_to_json(o);
  if (subcommand == "synth") run["synth"] = {{"n_cells", f.n_cells}, {"curve_cycle_limit", f.curve_cycle_limit}};
  run["timings_ms"] = timer.json();
  csv::write_text(dir / "run.json", run.dump(2) + "\n");
  csv::write_text(dir / "config.ini", cli.config_to_str(true, false));
}

int run(const std::string& sub, const Flags& f, const CLI::App& cli) {
  const app::PipelineOptions o = to_options(f);
  Timer timer;
  app::OutputStage stage(f.output_dir);
  const fs::path out = stage.path();

  if (sub == "synth") {
    synth::SynthConfig sc;
    sc.n_cells = f.n_cells;
    sc.curve_cycle_limit = f.curve_cycle_limit;
    sc.seed = f.seed;
    sc.threads = f.threads;
    const data::Dataset ds = synth::generate_dataset(sc);
    timer.mark("generate");
    data::save_dataset(ds, out);
    timer.mark("write");
  } else if (sub == "ingest") {
    require_input(f);
    const data::Dataset ds = data::load_dataset(f.input, f.threads);
    timer.mark("load");
    app::write_ingest_summary(out, ds);
  } else if (sub == "features") {
    require_input(f);
    const data::Dataset ds = data::load_dataset(f.input, f.threads);
    timer.mark("load");
    const auto fm = features::build_feature_matrix(ds, o.grid, o.mode, o.feature_options);
    timer.mark("features");
    features::write_features(out, fm);
  } else if (sub == "train") {
    const auto fm = load_features(f, o);
    timer.mark("features");
    const auto models = app::train_models(fm, o);
    timer.mark("train");
    app::write_models(out, models, o);
  } else if (sub == "evaluate") {
    const auto fm = load_features(f, o);
    timer.mark("features");
    const auto models = app::read_models(f.model_dir.empty() ? fs::path(f.output_dir) : fs::path(f.model_dir), o);
    const auto reports = app::evaluate_models(fm, models, o);
    timer.mark("evaluate");
    app::write_reports(out, reports);
  } else {  // pipeline
    const auto fm = load_features(f, o);
    timer.mark("features");
    features::write_features(out, fm);
    const auto models = app::train_models(fm, o);
    timer.mark("train");
    app::write_models(out, models, o);
    const auto reports = app::evaluate_models(fm, models, o);
    timer.mark("evaluate");
    app::write_reports(out, reports);
  }

  write_provenance(out, sub, f, o, timer, cli);
  stage.commit();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Battery cycle-life prediction from early-cycle data (GPR vs elastic net)", "cyclife"};
  cli.set_version_flag("--version", std::string(app::kVersion));
  cli.set_config("--config", "", "Flat key=value config file; command-line flags take precedence");
  cli.require_subcommand(1, 1);
  cli.fallthrough();

  Flags f;
  cli.add_option("--seed", f.seed, "Master seed for synthesis, CV folds, GPR restarts and splits")->capture_default_str();
  cli.add_option("--threads", f.threads, "Worker threads; results do not depend on this")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  cli.add_option("--output-dir", f.output_dir, "Artifact directory (created if missing)")->capture_default_str();
  cli.add_option("--input", f.input, "Dataset directory, or features.csv for train/evaluate/pipeline");
  cli.add_option("--model-dir", f.model_dir, "Directory holding gpr_model.json / enr_model.json (evaluate)");
  cli.add_option("--model", f.model, "gpr | enr | both")->capture_default_str();
  cli.add_option("--feature-mode", f.feature_mode, "voltage-resolved | paper-faithful")->capture_default_str();
  cli.add_option("--split", f.split, "train | holdout")->capture_default_str();
  cli.add_option("--holdout-fraction", f.holdout_fraction, "Fraction of cells held out when --split holdout")
      ->capture_default_str();
  cli.add_flag("--drop-censored", f.drop_censored, "Drop cells that never reach the end-of-life threshold");
  cli.add_option("--temperature-abscissa", f.temperature_abscissa, "cycle | charge-time")->capture_default_str();
  cli.add_option("--grid-points", f.grid_points, "Voltage grid resolution")->capture_default_str();
  cli.add_option("--gpr-restarts", f.gpr_restarts, "Additional perturbed GPR optimizer starts")->capture_default_str();
  cli.add_option("--gpr-max-iterations", f.gpr_max_iterations)->capture_default_str();
  cli.add_option("--gpr-standardize", f.gpr_standardize, "Z-score features inside the GPR kernel")
      ->capture_default_str();
  cli.add_option("--enr-alpha", f.enr_alpha)->capture_default_str();
  cli.add_option("--enr-folds", f.enr_folds)->capture_default_str();
  cli.add_option("--enr-n-lambda", f.enr_n_lambda)->capture_default_str();
  cli.add_option("--enr-lambda-ratio", f.enr_lambda_ratio)->capture_default_str();
  cli.add_option("--enr-weights", f.enr_weights, "raw | standardized coefficient scale for weights_enr.csv")
      ->capture_default_str();
  cli.add_option("--n-cells", f.n_cells, "synth: number of cells")->capture_default_str();
  cli.add_option("--curve-cycle-limit", f.curve_cycle_limit, "synth: write curves for cycles 1..N (0 = all)")
      ->capture_default_str();

  cli.add_subcommand("synth", "Generate a synthetic fleet in the interchange format");
  cli.add_subcommand("ingest", "Load, merge and screen a dataset; write cells.csv");
  cli.add_subcommand("features", "Extract the seven early-life features");
  cli.add_subcommand("train", "Fit GPR and/or elastic net");
  cli.add_subcommand("evaluate", "Score saved models; write metrics and report CSVs");
  cli.add_subcommand("pipeline", "features -> train -> evaluate in one run");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: code=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  const std::string sub = cli.get_subcommands().front()->get_name();
  try {
    return run(sub, f, cli);
  } catch (const Error& e) {
    std::cerr << "error: code=" << to_string(e.code()) << " message=\"" << one_line(e.what()) << "\"\n";
    return e.code() == ErrorCode::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: code=runtime message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
}
