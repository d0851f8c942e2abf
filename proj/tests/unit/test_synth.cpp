#include <gtest/gtest.h>

#include "cyclife/synth.hpp"

using namespace cyclife;
using namespace cyclife::synth;

TEST(Synth, NoiseFreeLabelMatchesLife) {
  const SynthConfig cfg = SynthConfig{}.noise_free();
  const auto cell = generate_cell(1000, 2.0, "4.8C-80PCT", 1, cfg);
  const auto label = data::cycle_life_label(cell, 0.88);
  EXPECT_FALSE(label.censored);
  EXPECT_NEAR(label.cycles, 1000, 1);
}

TEST(Synth, NoiseFreeCapacityStrictlyDecreasing) {
  const auto cell = generate_cell(600, 3.5, "5.4C-80PCT", 2, SynthConfig{}.noise_free());
  for (std::size_t i = 1; i < cell.cycles.size(); ++i)
    EXPECT_LT(cell.cycles[i].q_discharge, cell.cycles[i - 1].q_discharge) << i;
}

TEST(Synth, SameSeedSameCell) {
  const auto a = generate_cell(800, 4.0, "4.4C-80PCT", 77);
  const auto b = generate_cell(800, 4.0, "4.4C-80PCT", 77);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generate_cell(800, 4.0, "4.4C-80PCT", 78));
}

TEST(Synth, GeneratedCellsPassValidation) {
  const auto cell = generate_cell(300, 2.5, "6.0C-80PCT", 5);
  EXPECT_NO_THROW(data::validate_cell(cell, "synthetic"));
  EXPECT_TRUE(cell.has_curve(10));
  EXPECT_TRUE(cell.has_curve(100));
  EXPECT_FALSE(cell.has_curve(101));
}

TEST(Synth, SingleCellDataset) {
  SynthConfig cfg;
  cfg.n_cells = 1;
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.cells.size(), 1u);
  EXPECT_EQ(ds.cells[0].cell_id, "cell-0001");
}

TEST(Synth, LivesWithinClamp) {
  SynthConfig cfg;
  cfg.curve_cycle_limit = 1;
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.cells.size(), 124u);
  for (const auto& c : ds.cells) {
    const int life = data::cycle_life_label(c, ds.eol_threshold).cycles;
    EXPECT_GE(life, 145);
    EXPECT_LE(life, 2305);
  }
}

TEST(Synth, ThreadCountDoesNotChangeFleet) {
  SynthConfig cfg;
  cfg.n_cells = 6;
  cfg.seed = 3;
  const auto a = generate_dataset(cfg);
  cfg.threads = 3;
  EXPECT_EQ(generate_dataset(cfg), a);
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig cfg;
  cfg.life_min = 3000;
  EXPECT_THROW(generate_dataset(cfg), Error);
  cfg = {};
  cfg.n_cells = 0;
  EXPECT_THROW(generate_dataset(cfg), Error);
  EXPECT_THROW(generate_cell(50, 2.0, "4C", 1), Error);
}

TEST(Synth, PolicyParsing) {
  EXPECT_DOUBLE_EQ(policy_c_rate("5.4C-80PCT"), 5.4);
  EXPECT_DOUBLE_EQ(policy_c_rate("unknown"), 4.8);
  EXPECT_EQ(policy_name(3.6), "3.6C-80PCT");
}
