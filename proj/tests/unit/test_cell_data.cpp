#include <gtest/gtest.h>

#include "cyclife/cell_data.hpp"
#include "support/builders.hpp"

using namespace cyclife;
using namespace cyclife::data;
using testing_support::cell_with_q;
using testing_support::linear_curve;
using testing_support::make_cell;
using testing_support::TempDir;

namespace {

ExclusionManifest empty_manifest() {
  ExclusionManifest m;
  m.end_capacity_threshold = std::nullopt;
  return m;
}

}  // namespace

TEST(CellData, LoadsThreeCellsWithIdentityManifest) {
  TempDir dir;
  for (const char* id : {"a", "b", "c"}) write_cell(dir.path(), make_cell(id));
  const Dataset ds = load_dataset(dir.path(), empty_manifest());
  ASSERT_EQ(ds.cells.size(), 3u);
  for (const auto& c : ds.cells) {
    EXPECT_FALSE(c.excluded);
    EXPECT_EQ(c.cycle_count(), 100u);
  }
}

TEST(CellData, EndCapacityAboveThresholdIsExcluded) {
  TempDir dir;
  write_cell(dir.path(), cell_with_q("keep", {1.0, 0.95, 0.85}));
  write_cell(dir.path(), cell_with_q("high", {1.0, 0.95, 0.90}));
  ExclusionManifest m;
  m.end_capacity_threshold = 0.885;
  const Dataset ds = load_dataset(dir.path(), m);
  EXPECT_FALSE(ds.find("keep")->excluded);
  EXPECT_TRUE(ds.find("high")->excluded);
  EXPECT_EQ(ds.find("high")->exclusion_reason, "endcap");
}

TEST(CellData, ManifestMergeAppendsAppendLengthPlusOne) {
  TempDir dir;
  write_cell(dir.path(), make_cell("A", {.count = 10}));
  write_cell(dir.path(), make_cell("B", {.count = 5, .q = [](int n) { return 1.0 - 0.01 * n; }}));
  ExclusionManifest m = empty_manifest();
  m.continuation_merges.push_back({"A", "B", 2});
  const Dataset ds = load_dataset(dir.path(), m);
  ASSERT_EQ(ds.cells.size(), 1u);  // the source is consumed
  const CellRecord& a = ds.cells[0];
  ASSERT_EQ(a.cycle_count(), 13u);
  for (int n = 1; n <= 13; ++n) EXPECT_EQ(a.cycle(n).cycle_index, n);
  EXPECT_DOUBLE_EQ(a.cycle(11).q_discharge, 0.99);
  EXPECT_DOUBLE_EQ(a.cycle(13).q_discharge, 0.97);
}

TEST(CellData, MergeAppendLengthZeroAddsOneCycle) {
  const auto merged = merge_continuation(make_cell("t", {.count = 4}), make_cell("s", {.count = 3}), 0);
  EXPECT_EQ(merged.cycle_count(), 5u);
  EXPECT_EQ(merged.cycles.back().cycle_index, 5);
}

TEST(CellData, MergeOf660OntoHundredGives761) {
  const auto merged = merge_continuation(make_cell("t", {.count = 100}), make_cell("s", {.count = 700}), 660);
  EXPECT_EQ(merged.cycle_count(), 761u);
}

TEST(CellData, MergeBeyondSourceLengthFails) {
  try {
    merge_continuation(make_cell("t", {.count = 4}), make_cell("s", {.count = 1}), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
  }
}

TEST(CellData, MergeCarriesCurvesWithRenumbering) {
  CellRecord src = make_cell("s", {.count = 3});
  src.curves[2] = linear_curve(2, 3.4, 2.1, 1.0);
  const auto merged = merge_continuation(make_cell("t", {.count = 4}), src, 2);
  ASSERT_TRUE(merged.has_curve(6));
  EXPECT_EQ(merged.curves.at(6).cycle_index, 6);
}

TEST(CellData, LabelFirstCrossing) {
  EXPECT_EQ(cycle_life_label(cell_with_q("x", {1.10, 1.00, 0.87}), 0.88), (CycleLife{3, false}));
  EXPECT_EQ(cycle_life_label(cell_with_q("x", {1.10, 1.05}), 0.88), (CycleLife{3, true}));
  EXPECT_EQ(cycle_life_label(cell_with_q("x", {0.87}), 0.88), (CycleLife{1, false}));
}

TEST(CellData, RoundTripPreservesEveryField) {
  Dataset ds;
  ds.nominal_capacity = 1.1;
  ds.eol_threshold = 0.88;
  auto a = make_cell("cell-a", {.count = 12, .q = [](int n) { return 1.07 - 1e-4 * n / 3.0; }});
  a.curves[1] = linear_curve(1, 3.45, 2.05, 1.0731);
  a.curves[10] = linear_curve(10, 3.44, 2.01, 1.0699, 17);
  auto b = make_cell("cell-b", {.count = 5});
  b.batch_id = "b2";
  b.charge_policy = "3.6C-80PCT";
  b.excluded = true;
  b.exclusion_reason = "noisy channel";
  ds.cells = {a, b};

  TempDir dir;
  save_dataset(ds, dir.path());
  const Dataset back = load_dataset(dir.path());
  EXPECT_EQ(back, ds);
}

TEST(CellData, ExclusionsAreIdempotent) {
  Dataset ds;
  ds.cells = {cell_with_q("a", {1.0, 0.95}), cell_with_q("b", {1.0, 0.85})};
  ExclusionManifest m;
  m.excluded_cells.push_back({"b", "manual"});
  const Dataset once = apply_exclusions(ds, m);
  EXPECT_EQ(apply_exclusions(once, m), once);
  EXPECT_EQ(once.find("a")->exclusion_reason, "endcap");
  EXPECT_EQ(once.find("b")->exclusion_reason, "manual");
}

TEST(CellData, ManifestRejectsUnknownKeysAndBadTypes) {
  using nlohmann::json;
  EXPECT_THROW(manifest_from_json(json{{"surprise", 1}}, "m"), Error);
  EXPECT_THROW(manifest_from_json(json{{"nominal_capacity_ah", "x"}}, "m"), Error);
  EXPECT_THROW(manifest_from_json(json::array(), "m"), Error);
  const auto m = manifest_from_json(json{{"end_capacity_threshold_ah", nullptr}}, "m");
  EXPECT_FALSE(m.end_capacity_threshold.has_value());
  EXPECT_EQ(manifest_from_json(manifest_to_json(m), "m"), m);
}

TEST(CellData, SchemaViolationsNameFieldAndRow) {
  TempDir dir;
  csv::write_text(dir.path() / "bad.csv",
                  "cycle,q_discharge_ah,q_charge_ah,ir_ohm,t_max_c,t_avg_c,t_min_c,charge_time_min\n"
                  "1,1.0,1.0,0.01,33,30,28,10\n"
                  "3,1.0,1.0,0.01,33,30,28,10\n");
  try {
    read_cell(dir.path(), "bad");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::schema);
    EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos);
  }

  auto c = make_cell("curvy", {.count = 2});
  c.curves[1] = linear_curve(1, 3.6, 2.5, 1.0);  // above the voltage window
  write_cell(dir.path(), c);
  EXPECT_THROW(read_cell(dir.path(), "curvy"), Error);
}

TEST(CellData, MissingManifestMeansDefaults) {
  TempDir dir;
  write_cell(dir.path(), cell_with_q("a", {1.0, 0.8}));
  const Dataset ds = load_dataset(dir.path());
  EXPECT_DOUBLE_EQ(ds.eol_threshold, 0.88);
  EXPECT_FALSE(ds.eol_overridden());
}
