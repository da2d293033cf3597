#include <gtest/gtest.h>

#include <random>

#include "imputeformer/baselines.hpp"
#include "imputeformer/spectral.hpp"

namespace imputeformer::baselines {
namespace {

using data::Mask;

TEST(Mean, FillsWithSensorMean) {
  Eigen::MatrixXd x(2, 3);
  x << 2, 99, 4, 1, 1, 1;
  Mask m = Mask::Constant(2, 3, true);
  m(0, 1) = false;
  const auto out = impute_mean(x, m);
  EXPECT_EQ(out(0, 1), 3.0);
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out.row(1), x.row(1));
}

TEST(Mean, FallsBackToGlobalMean) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 3, 7, 7;
  Mask m = Mask::Constant(2, 2, true);
  m(1, 0) = m(1, 1) = false;
  const auto out = impute_mean(x, m);
  EXPECT_EQ(out(1, 0), 2.0);
  EXPECT_EQ(out(1, 1), 2.0);
  EXPECT_THROW(impute_mean(x, Mask::Constant(2, 2, false)), ContractError);
}

TEST(Linear, InterpolatesInteriorGaps) {
  Eigen::MatrixXd x(1, 5);
  x << 0, -1, -1, -1, 4;
  Mask m = Mask::Constant(1, 5, false);
  m(0, 0) = m(0, 4) = true;
  const auto out = impute_linear(x, m);
  EXPECT_DOUBLE_EQ(out(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(out(0, 3), 3.0);
}

TEST(Linear, BoundaryGapsCopyNearestAndEmptySensorUsesMean) {
  Eigen::MatrixXd x(2, 5);
  x << 9, 5, 9, 7, 9, 1, 1, 1, 1, 1;
  Mask m = Mask::Constant(2, 5, false);
  m(0, 1) = m(0, 3) = true;
  const auto out = impute_linear(x, m);
  EXPECT_EQ(out(0, 0), 5.0);
  EXPECT_EQ(out(0, 4), 7.0);
  EXPECT_EQ(out(0, 2), 6.0);
  for (Eigen::Index t = 0; t < 5; ++t) EXPECT_EQ(out(1, t), 6.0);
}

TEST(Baselines, FullyObservedIsIdentity) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(4, 9);
  for (auto& v : x.reshaped()) v = g(rng);
  const Mask all = Mask::Constant(4, 9, true);
  EXPECT_EQ(impute_mean(x, all), x);
  EXPECT_EQ(impute_linear(x, all), x);
  EXPECT_EQ(impute_als(x, all, {2, 0.1, 5, 0}).completed, x);
}

struct Rank1Case {
  Eigen::MatrixXd x;
  Mask m;
};

Rank1Case rank1(std::uint64_t seed, double observed_rate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd a(20), b(30);
  for (auto& v : a) v = 1.0 + 0.5 * g(rng);
  for (auto& v : b) v = g(rng);
  Rank1Case c{a * b.transpose(), Mask(20, 30)};
  // Every row and column keeps at least one observation.
  std::bernoulli_distribution coin(observed_rate);
  do {
    for (auto& v : c.m.reshaped()) v = coin(rng);
  } while ((c.m.rowwise().count().minCoeff() < 2) || (c.m.colwise().count().minCoeff() < 2));
  return c;
}

TEST(Als, RecoversNoiselessRankOne) {
  const auto c = rank1(2, 0.3);
  const auto r = impute_als(c.x, c.m, {1, 1e-6, 300, 3});
  EXPECT_LT((r.completed - c.x).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Als, ObjectiveIsMonotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(12, 40);
    for (auto& v : x.reshaped()) v = g(rng);
    Mask m(12, 40);
    std::bernoulli_distribution coin(0.6);
    for (auto& v : m.reshaped()) v = coin(rng);
    const auto r = impute_als(x, m, {3, 0.05, 30, seed});
    for (std::size_t k = 1; k < r.objective.size(); ++k)
      EXPECT_LE(r.objective[k], r.objective[k - 1] * (1.0 + 1e-12)) << "seed " << seed << " half-step " << k;
  }
}

TEST(Als, OutputRankAndSplice) {
  const auto c = rank1(4, 0.5);
  Eigen::MatrixXd noisy = c.x;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (auto& v : noisy.reshaped()) v += 0.3 * g(rng);
  const auto r = impute_als(noisy, c.m, {2, 0.01, 20, 1});
  const auto sv = spectral::svd_values(r.low_rank).values;
  EXPECT_LT(sv[2], 1e-8 * sv[0]);
  for (Eigen::Index i = 0; i < 20; ++i)
    for (Eigen::Index t = 0; t < 30; ++t)
      if (c.m(i, t)) EXPECT_EQ(r.completed(i, t), noisy(i, t));
}

TEST(Als, SingularSystemWithoutRegularization) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 6);
  Mask m = Mask::Constant(4, 6, true);
  m.row(2).setConstant(false);
  m(2, 0) = true;  // one observation cannot pin a rank-2 row
  EXPECT_THROW(impute_als(x, m, {2, 0.0, 3, 0}), NumericError);
  EXPECT_NO_THROW(impute_als(x, m, {2, 1e-3, 3, 0}));
  EXPECT_THROW(impute_als(x, m, {0, 1e-3, 3, 0}), ContractError);
  EXPECT_THROW(impute_als(x, m, {5, 1e-3, 3, 0}), ContractError);
}

// Low-rank completion concentrates energy: its cumulative spectrum sits on
// or above that of the complete noisy data.
TEST(Als, OversmoothsTheSpectrum) {
  const auto ds = data::synth_lowrank(24, 240, 6, 0.3, 24, 6);
  Mask m(24, 240);
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.7);
  for (auto& v : m.reshaped()) v = coin(rng);
  const auto r = impute_als(ds.values, m, {3, 0.1, 30, 0});
  const auto als = spectral::svd_values(r.low_rank).cumulative_energy();
  const auto raw = spectral::svd_values(ds.values).cumulative_energy();
  for (std::size_t k = 0; k < 3; ++k) EXPECT_GE(als[k], raw[k]);
}

}  // namespace
}  // namespace imputeformer::baselines
