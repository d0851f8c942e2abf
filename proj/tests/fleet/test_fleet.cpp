// Statistical behaviour of the synthetic fleet and of both models trained on it.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cyclife/pipeline.hpp"
#include "cyclife/synth.hpp"

using namespace cyclife;

namespace {

constexpr int kSeeds = 10;

struct SeedRun {
  app::PipelineResult result;
};

const std::map<int, SeedRun>& runs() {
  static const std::map<int, SeedRun> cache = [] {
    std::map<int, SeedRun> m;
    for (int seed = 0; seed < kSeeds; ++seed) {
      synth::SynthConfig cfg;
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.threads = 4;
      app::PipelineOptions o;
      o.gpr.minimizer.threads = 4;
      o.enr.threads = 4;
      m[seed].result = app::run_pipeline(synth::generate_dataset(cfg), o);
    }
    return m;
  }();
  return cache;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = num::mean(a), mb = num::mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Fleet, DefaultFleetHas124UsableCells) {
  for (const auto& [seed, run] : runs()) {
    EXPECT_EQ(run.result.features.size(), 124u) << "seed " << seed;
    EXPECT_TRUE(run.result.features.rejects.empty()) << "seed " << seed;
  }
}

TEST(Fleet, PooledLifeStatistics) {
  std::vector<double> lives;
  for (const auto& [seed, run] : runs())
    lives.insert(lives.end(), run.result.features.labels.begin(), run.result.features.labels.end());
  const double m = num::mean(lives);
  double ss = 0;
  for (double v : lives) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(lives.size() - 1));
  EXPECT_GE(m, 700.0);
  EXPECT_LE(m, 900.0);
  EXPECT_GE(sd, 280.0);
  EXPECT_LE(sd, 470.0);
  EXPECT_GE(*std::min_element(lives.begin(), lives.end()), 145.0);
  EXPECT_LE(*std::max_element(lives.begin(), lives.end()), 2305.0);
}

TEST(Fleet, VarianceFeatureTracksLogLife) {
  for (const auto& [seed, run] : runs()) {
    std::vector<double> var, log_life;
    for (std::size_t i = 0; i < run.result.features.size(); ++i) {
      var.push_back(run.result.features.rows[i].var_delta_q);
      log_life.push_back(std::log10(run.result.features.labels[i]));
    }
    EXPECT_LT(pearson(var, log_life), -0.5) << "seed " << seed;
  }
}

TEST(Fleet, GprRanksCurveFeaturesFirstInMostSeeds) {
  const std::set<std::size_t> expected{0, 1, 5};  // min, var, slope
  int hits = 0;
  for (const auto& [seed, run] : runs()) {
    const auto w = gpr::gpr_predictor_weights(*run.result.models.gpr);
    std::vector<std::size_t> order(w.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    if (std::set<std::size_t>(order.begin(), order.begin() + 3) == expected) ++hits;
  }
  EXPECT_GT(hits, kSeeds / 2);
}

TEST(Fleet, GprBeatsEnrOnTrainingFit) {
  int wins = 0;
  for (const auto& [seed, run] : runs()) {
    const auto* g = run.result.report("gpr");
    const auto* e = run.result.report("enr");
    ASSERT_NE(g, nullptr);
    ASSERT_NE(e, nullptr);
    EXPECT_LT(g->pct_err, 10.0) << "seed " << seed;
    if (g->rmse <= e->rmse) ++wins;
  }
  EXPECT_GE(wins, 9);
}
