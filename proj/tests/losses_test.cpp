#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "imputeformer/losses.hpp"
#include "imputeformer/spectral.hpp"

namespace imputeformer::losses {
namespace {

using data::Mask;

Mask all(Eigen::Index r, Eigen::Index c, bool v) { return Mask::Constant(r, c, v); }

TEST(Recon, ZeroWhenMaskedCellsMatch) {
  const Tensor y({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor p = y.detach();
  p.mutable_data()[0] = 100.0;  // unmasked cell
  Mask w = all(2, 3, false);
  w(1, 2) = true;
  EXPECT_EQ(recon_loss(p, y, w, all(2, 3, true)).item(), 0.0);
}

TEST(Recon, SingleCellOverGridSize) {
  const Tensor y = Tensor::zeros({3, 4});
  Tensor p = Tensor::zeros({3, 4});
  p.mutable_data()[5] = -0.6;
  Mask w = all(3, 4, false);
  w(1, 1) = true;
  EXPECT_DOUBLE_EQ(recon_loss(p, y, w, all(3, 4, true)).item(), 0.6 / 12.0);
}

TEST(Recon, GradientOnlyOnMaskedCells) {
  std::mt19937_64 rng(1);
  const Tensor y = testing::random_tensor({3, 5}, rng);
  Mask w = all(3, 5, false);
  w(0, 1) = w(2, 4) = w(1, 0) = true;
  Tape tape;
  const Tensor p = tape.leaf(testing::random_tensor({3, 5}, rng));
  tape.backward(recon_loss(p, y, w, all(3, 5, true)));
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index t = 0; t < 5; ++t) {
      const double g = p.grad()[static_cast<std::size_t>(i * 5 + t)];
      if (w(i, t)) EXPECT_DOUBLE_EQ(std::abs(g), 1.0 / 15.0);
      else EXPECT_EQ(g, 0.0);
    }
}

TEST(Recon, RejectsWhiteningOutsideObserved) {
  Mask w = all(2, 2, false), obs = all(2, 2, true);
  w(0, 0) = true;
  obs(0, 0) = false;
  EXPECT_THROW(recon_loss(Tensor::zeros({2, 2}), Tensor::zeros({2, 2}), w, obs), ContractError);
  EXPECT_THROW(recon_loss(Tensor::zeros({2, 3}), Tensor::zeros({2, 2}), w, obs), DimensionError);
}

TEST(Recon, IgnoresTargetOutsideMask) {
  std::mt19937_64 rng(2);
  const Tensor p = testing::random_tensor({2, 4}, rng);
  Tensor y = testing::random_tensor({2, 4}, rng);
  Mask w = all(2, 4, false);
  w(0, 2) = true;
  const double a = recon_loss(p, y, w, all(2, 4, true)).item();
  y.mutable_data()[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(recon_loss(p, y, w, all(2, 4, true)).item(), a);
}

TEST(Fil, EmptyMissingMaskHasNoPredGradient) {
  std::mt19937_64 rng(3);
  const Tensor y = testing::random_tensor({3, 4}, rng);
  Tape tape;
  const Tensor p = tape.leaf(testing::random_tensor({3, 4}, rng));
  const Tensor loss = fil_loss(p, y, all(3, 4, false));
  EXPECT_NEAR(loss.item(), spectral::dft_l1(y).item(), 1e-15);
  tape.backward(loss);
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Fil, ConstantSplicedGrid) {
  const double c = -1.7;
  Mask m = all(2, 2, false);
  m(0, 1) = m(1, 0) = true;
  const Tensor p = Tensor::full({2, 2}, c);
  Tensor y = Tensor::full({2, 2}, c);
  y.mutable_data()[1] = 50.0;  // hidden under the mask, must not matter
  EXPECT_NEAR(fil_loss(p, y, m).item(), std::abs(c), 1e-14);
}

TEST(Fil, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Tensor y = testing::random_tensor({4, 6}, rng);
  Mask m(4, 6);
  std::bernoulli_distribution coin(0.5);
  for (auto& v : m.reshaped()) v = coin(rng);
  const auto r = testing::gradcheck({testing::random_tensor({4, 6}, rng)},
                                    [&](const std::vector<Tensor>& in) { return fil_loss(in[0], y, m); });
  EXPECT_EQ(r.probes, 24u);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Total, LambdaAlgebra) {
  std::mt19937_64 rng(5);
  const Tensor y = testing::random_tensor({3, 4}, rng);
  const Tensor p = testing::random_tensor({3, 4}, rng);
  Mask obs = all(3, 4, true), w = all(3, 4, false);
  obs(2, 3) = false;
  w(0, 0) = w(1, 2) = true;
  const Mask missing = w || !obs;

  const auto b0 = total_loss(p, y, w, obs, missing, 0.0);
  EXPECT_EQ(b0.total.item(), b0.recon.item());
  const auto b1 = total_loss(p, y, w, obs, missing, 0.3);
  const auto b2 = total_loss(p, y, w, obs, missing, 0.6);
  EXPECT_EQ(b1.total.item(), b1.recon.item() + 0.3 * b1.fil.item());
  EXPECT_NEAR(b2.total.item() - b2.recon.item(), 2.0 * (b1.total.item() - b1.recon.item()), 1e-15);
  EXPECT_GE(b1.fil.item(), 0.0);
  EXPECT_THROW(total_loss(p, y, w, obs, missing, -0.1), ContractError);
}

TEST(Total, ZeroAtPerfectZeroGrid) {
  Mask w = all(2, 3, false);
  w(1, 1) = true;
  const auto b = total_loss(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), w, all(2, 3, true), w, 1.0);
  EXPECT_EQ(b.total.item(), 0.0);
}

TEST(Total, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Tensor y = testing::random_tensor({3, 5}, rng);
  Mask obs(3, 5), w = all(3, 5, false);
  std::bernoulli_distribution coin(0.7);
  for (auto& v : obs.reshaped()) v = coin(rng);
  for (Eigen::Index k = 0; k < obs.size(); k += 2) w.reshaped()(k) = obs.reshaped()(k);
  const auto r = testing::gradcheck({testing::random_tensor({3, 5}, rng)}, [&](const std::vector<Tensor>& in) {
    return total_loss(in[0], y, w, obs, w || !obs, 0.5).total;
  });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

// Free missing cells of a sinusoid-sampled grid, minimized by gradient
// descent with a backtracking step: the loss curve never goes up.
TEST(Fil, DescentOnSinusoidIsMonotone) {
  const Eigen::Index N = 4, T = 24;
  Eigen::MatrixXd truth(N, T);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 0; t < T; ++t)
      truth(i, t) = (1.0 + 0.5 * static_cast<double>(i)) * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 12.0);
  Mask missing(N, T);
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.3);
  for (auto& v : missing.reshaped()) v = coin(rng);
  const Tensor target = Tensor::from_matrix(missing.select(0.0, truth.array()).matrix());

  Eigen::MatrixXd filled = Eigen::MatrixXd::Zero(N, T);
  auto evaluate = [&](const Eigen::MatrixXd& m, Eigen::MatrixXd* grad) {
    Tape tape;
    const Tensor p = tape.leaf(Tensor::from_matrix(m));
    const Tensor loss = fil_loss(p, target, missing);
    if (grad != nullptr) {
      tape.backward(loss);
      *grad = p.grad_matrix();
    }
    return loss.item();
  };

  std::vector<double> curve;
  double step = 1.0;
  Eigen::MatrixXd g;
  double current = evaluate(filled, &g);
  curve.push_back(current);
  for (int it = 0; it < 200; ++it) {
    step = std::min(1.0, 2.0 * step);
    for (int halvings = 0; halvings < 40; ++halvings, step *= 0.5) {
      const Eigen::MatrixXd trial = filled - step * g;
      const double v = evaluate(trial, nullptr);
      if (v <= current) {
        filled = trial;
        current = evaluate(filled, &g);
        break;
      }
    }
    curve.push_back(current);
  }
  for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_LE(curve[k], curve[k - 1]);
  EXPECT_LT(curve.back(), 0.7 * curve.front());
  // Descent fills the gaps toward the sinusoid.
  const Eigen::MatrixXd err = missing.select(filled - truth, 0.0);
  const Eigen::MatrixXd err0 = missing.select(-truth, 0.0);
  EXPECT_LT(err.norm(), 0.5 * err0.norm());
}

}  // namespace
}  // namespace imputeformer::losses
