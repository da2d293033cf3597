#include "imputeformer/losses.hpp"

#include <cmath>

#include "imputeformer/spectral.hpp"

namespace imputeformer::losses {

namespace {

void check_grid(const Tensor& t, const data::Mask& m, const char* what) {
  if (t.dim() != 2 || static_cast<Eigen::Index>(t.shape()[0]) != m.rows() ||
      static_cast<Eigen::Index>(t.shape()[1]) != m.cols()) {
    throw DimensionError(std::string(what) + ": tensor " + shape_string(t.shape()) + " does not match mask [" +
                         std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]");
  }
}

Tensor mask_tensor(const data::Mask& m) {
  const Eigen::MatrixXd v = m.cast<double>().matrix();
  return Tensor::from_matrix(v);
}

}  // namespace

Tensor recon_loss(const Tensor& pred, const Tensor& target, const data::Mask& whiten, const data::Mask& observed) {
  check_grid(pred, whiten, "recon_loss");
  check_grid(target, whiten, "recon_loss");
  check_grid(pred, observed, "recon_loss");
  if ((whiten && !observed).any()) throw ContractError("recon_loss: whitening mask selects cells that were never observed");
  // Unsupervised cells contribute nothing, whatever the target holds there.
  const Eigen::MatrixXd t = whiten.select(target.matrix().array(), 0.0).matrix();
  const Tensor diff = mul(sub(pred, Tensor::from_matrix(t)), mask_tensor(whiten));
  return scale(reduce_sum(abs(diff)), 1.0 / static_cast<double>(pred.size()));
}

Tensor fil_loss(const Tensor& pred, const Tensor& target, const data::Mask& missing) {
  check_grid(pred, missing, "fil_loss");
  check_grid(target, missing, "fil_loss");
  const Eigen::MatrixXd kept = missing.select(0.0, target.matrix().array()).matrix();
  return spectral::dft_l1(add(mul(pred, mask_tensor(missing)), Tensor::from_matrix(kept)));
}

LossBreakdown total_loss(const Tensor& pred, const Tensor& target, const data::Mask& whiten,
                         const data::Mask& observed, const data::Mask& missing, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ContractError("total_loss: lambda must be finite and >= 0, got " + std::to_string(lambda));
  LossBreakdown b;
  b.lambda = lambda;
  b.recon = recon_loss(pred, target, whiten, observed);
  b.fil = fil_loss(pred, target, missing);
  b.total = add(b.recon, scale(b.fil, lambda));
  return b;
}

}  // namespace imputeformer::losses
