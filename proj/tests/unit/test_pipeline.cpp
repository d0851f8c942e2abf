#include <gtest/gtest.h>

#include <set>

#include "cyclife/pipeline.hpp"
#include "cyclife/synth.hpp"
#include "support/builders.hpp"

using namespace cyclife;
using namespace cyclife::app;

TEST(Split, TrainModeUsesEveryRow) {
  const auto s = make_split(5, PipelineOptions{});
  EXPECT_EQ(s.train, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(s.test, s.train);
}

TEST(Split, HoldoutIsSeededAndDisjoint) {
  PipelineOptions o;
  o.split = SplitMode::holdout;
  o.holdout_fraction = 0.25;
  o.set_seed(9);
  const auto a = make_split(20, o);
  EXPECT_EQ(a.test.size(), 5u);
  EXPECT_EQ(a.train.size(), 15u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 20u);
  EXPECT_EQ(make_split(20, o).test, a.test);
  o.set_seed(10);
  EXPECT_NE(make_split(20, o).test, a.test);
  o.holdout_fraction = 1.0;
  EXPECT_THROW(make_split(20, o), Error);
}

TEST(Options, ParsersRejectUnknownValues) {
  EXPECT_EQ(parse_model_choice("both"), ModelChoice::both);
  EXPECT_EQ(parse_split("holdout"), SplitMode::holdout);
  try {
    parse_model_choice("svm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::usage);
  }
  EXPECT_THROW(parse_split("kfold"), Error);
  EXPECT_THROW(features::parse_feature_mode("fancy"), Error);
}

TEST(Pipeline, SmallFleetEndToEnd) {
  synth::SynthConfig sc;
  sc.n_cells = 16;
  sc.seed = 2;
  const auto ds = synth::generate_dataset(sc);
  PipelineOptions o;
  o.set_seed(2);
  o.gpr.minimizer.restarts = 2;
  o.enr.n_lambda = 20;
  const auto r = run_pipeline(ds, o);
  ASSERT_EQ(r.reports.size(), 2u);
  ASSERT_NE(r.report("gpr"), nullptr);
  ASSERT_NE(r.report("enr"), nullptr);
  EXPECT_EQ(r.report("gpr")->n, 16u);

  testing_support::TempDir dir;
  write_models(dir.path(), r.models, o);
  write_reports(dir.path(), r.reports);
  for (const char* f : {"gpr_model.json", "weights_gpr.csv", "enr_model.json", "cv_curve.csv", "metrics.csv",
                        "report_gpr.csv", "residuals_enr.csv", "scatter_gpr.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;

  const auto back = read_models(dir.path(), o);
  const auto again = evaluate_models(r.features, back, o);
  EXPECT_EQ(again[0].predicted, r.reports[0].predicted);
  EXPECT_EQ(again[1].predicted, r.reports[1].predicted);
}

TEST(OutputStageTest, CommitMovesAndDestructorCleans) {
  testing_support::TempDir dir;
  const auto dest = dir.path() / "out";
  {
    OutputStage stage(dest);
    csv::write_text(stage.path() / "a.txt", "x");
  }
  EXPECT_FALSE(std::filesystem::exists(dest / "a.txt"));
  {
    OutputStage stage(dest);
    csv::write_text(stage.path() / "a.txt", "y");
    stage.commit();
  }
  EXPECT_EQ(csv::read_text(dest / "a.txt"), "y");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dest)) ++entries;
  EXPECT_EQ(entries, 1u);
}
