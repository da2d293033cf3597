#pragma once

// Classical imputers used as yardsticks: per-sensor mean, temporal linear
// interpolation and low-rank matrix factorization by alternating least squares.
// All work on N x steps matrices and return observed cells unchanged.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "imputeformer/data.hpp"

namespace imputeformer::baselines {

enum class BaselineKind { mean, linear_interp, als };

// Missing cells get their sensor's observed mean, or the global observed
// mean for sensors with no observations.
Eigen::MatrixXd impute_mean(const Eigen::MatrixXd& values, const data::Mask& observed);

// Linear interpolation between the nearest observed neighbours in time;
// leading/trailing gaps copy the nearest observation.
Eigen::MatrixXd impute_linear(const Eigen::MatrixXd& values, const data::Mask& observed);

struct AlsOptions {
  Eigen::Index rank = 5;
  double reg = 1e-3;
  int iters = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AlsResult {
  Eigen::MatrixXd completed;  // U V^T spliced with observations
  Eigen::MatrixXd low_rank;   // U V^T
  Eigen::MatrixXd u, v;       // N x r, steps x r
  std::vector<double> objective;  // after every half-step
};

// Minimizes ||M o (X - U V^T)||_F^2 + reg (||U||_F^2 + ||V||_F^2).
AlsResult impute_als(const Eigen::MatrixXd& values, const data::Mask& observed, const AlsOptions& opts);

}  // namespace imputeformer::baselines
