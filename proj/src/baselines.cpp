#include "imputeformer/baselines.hpp"

#include <cmath>
#include <random>

#include "imputeformer/spectral.hpp"

namespace imputeformer::baselines {

namespace {

void check_inputs(const Eigen::MatrixXd& values, const data::Mask& observed, const char* what) {
  if (values.rows() != observed.rows() || values.cols() != observed.cols())
    throw DimensionError(std::string(what) + ": values and mask shapes differ");
  if (!observed.any()) throw ContractError(std::string(what) + ": no observed cells to impute from");
}

double objective(const Eigen::MatrixXd& x, const data::Mask& m, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v,
                 double reg) {
  const Eigen::MatrixXd r = m.select((x - u * v.transpose()).array(), 0.0).matrix();
  return r.squaredNorm() + reg * (u.squaredNorm() + v.squaredNorm());
}

// Ridge solve of every row of `out` given the fixed factor `fixed`:
// (sum_{j in obs(i)} f_j f_j^T + reg I) out_i = sum x_ij f_j.
void solve_rows(const Eigen::MatrixXd& x, const data::Mask& m, const Eigen::MatrixXd& fixed, double reg,
                Eigen::MatrixXd& out) {
  const Eigen::Index r = fixed.cols();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::MatrixXd gram = reg * Eigen::MatrixXd::Identity(r, r);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!m(i, j)) continue;
      gram.noalias() += fixed.row(j).transpose() * fixed.row(j);
      rhs.noalias() += x(i, j) * fixed.row(j).transpose();
    }
    const auto sv = spectral::jacobi_svd(gram).values;
    if (sv(r - 1) <= 1e-12 * std::max(sv(0), 1e-300))
      throw NumericError("als: singular ridge system for row " + std::to_string(i) +
                         " (too few observations for the rank); use reg > 0");
    out.row(i) = (spectral::pseudo_inverse(gram) * rhs).transpose();
  }
}

}  // namespace

Eigen::MatrixXd impute_mean(const Eigen::MatrixXd& values, const data::Mask& observed) {
  check_inputs(values, observed, "impute_mean");
  const double global = observed.select(values.array(), 0.0).sum() / static_cast<double>(observed.count());
  Eigen::MatrixXd out = values;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const auto n = observed.row(i).count();
    const double mean = n == 0 ? global : observed.row(i).select(values.row(i).array(), 0.0).sum() / static_cast<double>(n);
    for (Eigen::Index t = 0; t < values.cols(); ++t)
      if (!observed(i, t)) out(i, t) = mean;
  }
  return out;
}

Eigen::MatrixXd impute_linear(const Eigen::MatrixXd& values, const data::Mask& observed) {
  check_inputs(values, observed, "impute_linear");
  Eigen::MatrixXd out = impute_mean(values, observed);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    Eigen::Index prev = -1;
    for (Eigen::Index t = 0; t <= values.cols(); ++t) {
      if (t < values.cols() && !observed(i, t)) continue;
      // Fill the gap (prev, t).
      for (Eigen::Index g = prev + 1; g < t; ++g) {
        if (prev < 0 && t == values.cols()) break;  // no observations: keep the mean fallback
        if (prev < 0) out(i, g) = values(i, t);
        else if (t == values.cols()) out(i, g) = values(i, prev);
        else {
          const double a = static_cast<double>(g - prev) / static_cast<double>(t - prev);
          out(i, g) = (1.0 - a) * values(i, prev) + a * values(i, t);
        }
      }
      prev = t;
    }
  }
  return out;
}

void AlsOptions::validate() const {
  if (rank < 1) throw ContractError("als: rank must be >= 1");
  if (!(reg >= 0.0)) throw ContractError("als: reg must be >= 0");
  if (iters < 1) throw ContractError("als: iters must be >= 1");
}

AlsResult impute_als(const Eigen::MatrixXd& values, const data::Mask& observed, const AlsOptions& opts) {
  opts.validate();
  check_inputs(values, observed, "impute_als");
  if (opts.rank > std::min(values.rows(), values.cols()))
    throw ContractError("als: rank " + std::to_string(opts.rank) + " exceeds min(N, steps)");
  // Unobserved cells never enter the solves; zero them so stray NaNs cannot leak.
  const Eigen::MatrixXd x = observed.select(values.array(), 0.0).matrix();

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> g;
  AlsResult r;
  r.u = Eigen::MatrixXd::Zero(x.rows(), opts.rank);
  r.v.resize(x.cols(), opts.rank);
  for (auto& e : r.v.reshaped()) e = g(rng);
  const data::Mask mt = observed.transpose();
  const Eigen::MatrixXd xt = x.transpose();
  for (int it = 0; it < opts.iters; ++it) {
    solve_rows(x, observed, r.v, opts.reg, r.u);
    r.objective.push_back(objective(x, observed, r.u, r.v, opts.reg));
    solve_rows(xt, mt, r.u, opts.reg, r.v);
    r.objective.push_back(objective(x, observed, r.u, r.v, opts.reg));
  }
  r.low_rank = r.u * r.v.transpose();
  r.completed = observed.select(values.array(), r.low_rank.array()).matrix();
  return r;
}

}  // namespace imputeformer::baselines
