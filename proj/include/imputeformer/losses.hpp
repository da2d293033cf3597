#pragma once

// Masked reconstruction loss, Fourier imputation loss and their weighted sum.
// Both terms divide by the full grid size N*T, not by the mask count.

#include "imputeformer/data.hpp"
#include "imputeformer/tensor.hpp"

namespace imputeformer::losses {

struct LossBreakdown {
  Tensor recon;
  Tensor fil;
  Tensor total;  // recon + lambda * fil, differentiable
  double lambda = 0.0;
};

// (1/NT) * sum |whiten * (pred - target)|. Throws ContractError when a
// whitened cell is not in `observed`.
Tensor recon_loss(const Tensor& pred, const Tensor& target, const data::Mask& whiten, const data::Mask& observed);

// dft_l1 of pred spliced into `missing` cells and target elsewhere. Target
// values under `missing` are never read.
Tensor fil_loss(const Tensor& pred, const Tensor& target, const data::Mask& missing);

LossBreakdown total_loss(const Tensor& pred, const Tensor& target, const data::Mask& whiten,
                         const data::Mask& observed, const data::Mask& missing, double lambda);

}  // namespace imputeformer::losses
