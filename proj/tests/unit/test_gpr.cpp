#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cyclife/gpr.hpp"
#include "support/builders.hpp"

using namespace cyclife;
using namespace cyclife::gpr;
using testing_support::random_matrix;

namespace {

GprHyperparams hyper(double sf, std::vector<double> ls, double sn, double beta) {
  return {sf, std::move(ls), sn, beta};
}

}  // namespace

TEST(Kernel, ZeroDistanceGivesSignalVariance) {
  const auto h = hyper(2.0, {1.0, 3.0}, 0.1, 0.0);
  const Vector x{0.3, -1.0};
  EXPECT_DOUBLE_EQ(ard_exponential(x, x, h), 4.0);
}

TEST(Kernel, UnitDistance) {
  const auto h = hyper(1.0, {1.0}, 0.1, 0.0);
  EXPECT_NEAR(ard_exponential(Vector{0.0}, Vector{1.0}, h), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(ard_exponential(Vector{0.0}, Vector{1.0}, h), 0.3678794, 1e-7);
}

TEST(Gram, SmallCases) {
  const auto h = hyper(1.5, {1.0, 2.0}, 0.1, 0.0);
  const auto one = gram(DenseMatrix{{0.1, 0.2}}, h);
  ASSERT_EQ(one.rows(), 1u);
  EXPECT_DOUBLE_EQ(one(0, 0), 2.25);
  const auto same = gram(DenseMatrix{{0.1, 0.2}, {0.1, 0.2}}, h);
  for (double v : same.data()) EXPECT_DOUBLE_EQ(v, 2.25);

  std::mt19937_64 rng(3);
  const auto x = random_matrix(3, 2, rng);
  const auto k = gram(x, h);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      // Independent oracle: explicit scaled Euclidean distance.
      const double d0 = (x(i, 0) - x(j, 0)) / 1.0, d1 = (x(i, 1) - x(j, 1)) / 2.0;
      EXPECT_NEAR(k(i, j), 2.25 * std::exp(-std::sqrt(d0 * d0 + d1 * d1)), 1e-14);
    }
}

TEST(Nlml, SinglePointClosedForm) {
  const auto h = hyper(1.2, {0.7}, 0.4, 3.0);
  const double y = 4.1;
  const double s2 = 1.44 + 0.16;
  const double expected = 0.5 * (y - 3.0) * (y - 3.0) / s2 + 0.5 * std::log(s2) + 0.5 * std::log(2 * std::numbers::pi);
  const auto r = neg_log_marginal_likelihood(h, DenseMatrix{{0.5}}, Vector{y});
  EXPECT_NEAR(r.value, expected, 1e-12);
  // d/dbeta = -(y - beta) / s2
  EXPECT_NEAR(r.gradient[3], -(y - 3.0) / s2, 1e-12);
}

TEST(Nlml, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const auto x = random_matrix(10, 7, rng);
  std::normal_distribution<double> nd;
  Vector y(10);
  for (double& v : y) v = 2.0 + nd(rng);
  const auto h = hyper(1.3, {0.8, 1.1, 0.6, 1.4, 0.9, 1.2, 0.7}, 0.5, 1.7);

  const auto pack = [](const GprHyperparams& p) {
    Vector t{std::log(p.signal_std)};
    for (double l : p.length_scales) t.push_back(std::log(l));
    t.push_back(std::log(p.noise_std));
    t.push_back(p.constant_mean);
    return t;
  };
  const auto unpack = [](const Vector& t) {
    GprHyperparams p;
    p.signal_std = std::exp(t[0]);
    for (std::size_t m = 1; m + 2 < t.size(); ++m) p.length_scales.push_back(std::exp(t[m]));
    p.noise_std = std::exp(t[t.size() - 2]);
    p.constant_mean = t.back();
    return p;
  };

  const auto analytic = neg_log_marginal_likelihood(h, x, y).gradient;
  const Vector t0 = pack(h);
  for (std::size_t i = 0; i < t0.size(); ++i) {
    Vector tp = t0, tm = t0;
    tp[i] += 1e-5;
    tm[i] -= 1e-5;
    const double fd = (neg_log_marginal_likelihood(unpack(tp), x, y).value -
                       neg_log_marginal_likelihood(unpack(tm), x, y).value) /
                      2e-5;
    EXPECT_LT(std::abs(fd - analytic[i]) / std::max(1.0, std::abs(fd)), 1e-4) << "coordinate " << i;
  }
}

TEST(Nlml, ConstantTargetsWithLargeNoise) {
  // With sn >> sf the covariance is nearly sn^2 I; at beta = y the quadratic
  // term vanishes and the value tends to the Gaussian NLL of the constants.
  const auto h = hyper(1e-3, {1.0}, 50.0, 7.0);
  const DenseMatrix x{{0.0}, {1.0}, {2.0}, {3.0}};
  const auto r = neg_log_marginal_likelihood(h, x, Vector(4, 7.0));
  const double expected = 4 * (0.5 * std::log(2500.0) + 0.5 * std::log(2 * std::numbers::pi));
  EXPECT_NEAR(r.value, expected, 1e-6);
}

TEST(Weights, ExponentialOfLengthScales) {
  GprModel m;
  m.hyper = hyper(1.0, {1.0, 2.0}, 0.1, 0.0);
  const auto w = gpr_predictor_weights(m);
  EXPECT_NEAR(w[0], std::exp(-1.0) / (std::exp(-1.0) + std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(w[0], 0.7311, 1e-4);
  EXPECT_NEAR(w[1], 0.2689, 1e-4);

  m.hyper.length_scales.assign(7, 3.3);
  for (double v : gpr_predictor_weights(m)) EXPECT_NEAR(v, 1.0 / 7.0, 1e-12);

  m.hyper.length_scales = {800.0, 900.0};  // no underflow to 0/0
  const auto big = gpr_predictor_weights(m);
  EXPECT_NEAR(big[0] + big[1], 1.0, 1e-12);
  EXPECT_GT(big[0], big[1]);
}

TEST(Predict, SinglePointClosedForm) {
  const auto h = hyper(2.0, {1.5}, 0.3, 10.0);
  const auto m = make_model(h, DenseMatrix{{0.0}}, Vector{13.0}, {});
  const double k = 4.0 * std::exp(-1.0 / 1.5);
  const double s2 = 4.0 + 0.09;
  const auto p = predict_gpr(m, DenseMatrix{{1.0}});
  EXPECT_NEAR(p.mean[0], 10.0 + k * 3.0 / s2, 1e-12);
  EXPECT_NEAR(p.std[0], std::sqrt(4.0 - k * k / s2 + 0.09), 1e-12);
}

TEST(Predict, FarQueryRevertsToPrior) {
  const auto h = hyper(2.0, {1.0, 1.0}, 0.5, 100.0);
  const auto m = make_model(h, DenseMatrix{{0, 0}, {1, 0}, {0, 1}}, Vector{90, 120, 105}, {});
  const auto p = predict_gpr(m, DenseMatrix{{1e4, -1e4}});
  EXPECT_NEAR(p.mean[0], 100.0, 1e-9);
  EXPECT_NEAR(p.std[0], std::sqrt(4.0 + 0.25), 1e-9);
}

TEST(Predict, TrainingPointWithTinyNoiseInterpolates) {
  const auto h = hyper(1.0, {1.0}, 1e-6, 0.0);
  const auto m = make_model(h, DenseMatrix{{0.0}, {0.7}, {2.0}}, Vector{1.0, -0.5, 0.25}, {});
  const auto p = predict_gpr(m, DenseMatrix{{0.7}});
  EXPECT_NEAR(p.mean[0], -0.5, 1e-6);
}

TEST(Fit, ConstantTargets) {
  std::mt19937_64 rng(5);
  const auto x = random_matrix(12, 2, rng);
  const Vector y(12, 640.0);
  const auto m = fit_gpr(x, y);
  EXPECT_NEAR(m.hyper.constant_mean, 640.0, 1e-3);
  const auto p = predict_gpr(m, random_matrix(4, 2, rng));
  for (double v : p.mean) EXPECT_NEAR(v, 640.0, 1e-3);
}

TEST(Fit, NoiseFreeSmoothTargetsInterpolate) {
  std::mt19937_64 rng(9);
  const auto x = random_matrix(30, 2, rng, 0.0, 3.0);
  Vector y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = 500.0 + 100.0 * std::sin(x(i, 0)) + 40.0 * x(i, 1);
  GprConfig cfg;
  cfg.minimizer.max_iterations = 500;
  const auto m = fit_gpr(x, y, cfg);
  const auto p = predict_gpr(m, x);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(p.mean[i], y[i], 1e-3 * std::abs(y[i])) << i;
}

TEST(Fit, DeterministicAcrossThreads) {
  std::mt19937_64 rng(21);
  const auto x = random_matrix(20, 3, rng);
  Vector y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = 800 + 200 * x(i, 0) - 50 * x(i, 2) * x(i, 2);
  GprConfig cfg;
  cfg.minimizer.seed = 4;
  const auto a = fit_gpr(x, y, cfg);
  cfg.minimizer.threads = 4;
  const auto b = fit_gpr(x, y, cfg);
  EXPECT_EQ(a.hyper, b.hyper);
}

TEST(Serialization, JsonRoundTripPredictsIdentically) {
  std::mt19937_64 rng(2);
  const auto x = random_matrix(8, 2, rng);
  const Vector y{1, 2, 3, 4, 5, 6, 7, 8};
  const auto m = fit_gpr(x, y);
  const auto back = gpr_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.hyper, m.hyper);
  const auto q = random_matrix(3, 2, rng);
  EXPECT_EQ(predict_gpr(back, q).mean, predict_gpr(m, q).mean);
  EXPECT_THROW(gpr_from_json(nlohmann::json{{"schema", "gpr/9"}}), Error);
}

TEST(Predict, WrongWidthIsDimensionMismatch) {
  const auto m = make_model(hyper(1, {1}, 0.1, 0), DenseMatrix{{0.0}, {1.0}}, Vector{0, 1}, {});
  try {
    predict_gpr(m, DenseMatrix{{0.0, 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}
