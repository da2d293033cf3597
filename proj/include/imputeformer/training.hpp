#pragma once

// Masked self-supervised training, windowed inference and scoring.

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <vector>

#include "imputeformer/data.hpp"
#include "imputeformer/errors.hpp"
#include "imputeformer/model.hpp"

namespace imputeformer::training {

struct TrainConfig {
  double lr = 1e-3;
  double lr_min = 1e-5;  // cosine floor; clamped to lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 8;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
  double grad_clip = 5.0;  // <= 0 disables clipping
  double lambda = 0.01;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // lr == 0 is accepted here (a frozen run); front ends may demand lr > 0.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_recon = 0.0;
  double train_fil = 0.0;
  double val_mae = 0.0;  // NaN without validation windows
};

struct StepRecord {
  std::size_t step = 0;
  double recon = 0.0;
  double fil = 0.0;
  double total = 0.0;
};

struct TrainResult {
  model::ModelParams params;  // best-validation parameters
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t total_steps = 0;
  bool stopped_early = false;
};

// Raised when a loss or gradient turns non-finite; carries the parameters
// from before the offending step.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, model::ModelParams last_good, std::size_t step)
      : NumericError(what), last_good(std::move(last_good)), step(step) {}
  model::ModelParams last_good;
  std::size_t step;
};

struct Gradients {
  std::vector<std::vector<double>> values;  // one buffer per parameter, in entry order

  double norm() const;
};

// Rescales to `max_norm` when the global norm exceeds it; returns the norm before clipping.
double clip_gradients(Gradients& g, double max_norm);

class Adam {
 public:
  Adam(const model::ModelParams& params, const TrainConfig& cfg);
  void step(model::ModelParams& params, const Gradients& g, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Cosine decay from cfg.lr to min(cfg.lr_min, cfg.lr) over total_steps.
double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

// Loss and gradients of one window. The supervision target is y on
// observed cells only; FIL treats whitened and unobserved cells as missing.
struct WindowLoss {
  double recon = 0.0, fil = 0.0, total = 0.0;
  Gradients grads;
};
WindowLoss window_loss(const model::ModelConfig& cfg, const model::ModelParams& params, const data::Window& w,
                       double lambda);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const model::ModelConfig& cfg, model::ModelParams init, std::vector<data::Window> train_windows,
                  const std::vector<data::Window>& val_windows, const data::Standardizer& scaler,
                  const data::WhitenSpec& whiten, const TrainConfig& tc, const EpochCallback& on_epoch = {});

// Mean absolute error over whitened cells in original units.
double validation_mae(const model::ModelConfig& cfg, const model::ModelParams& params,
                      const std::vector<data::Window>& windows, const data::Standardizer& scaler,
                      std::size_t threads = 1);

// --- inference ---------------------------------------------------------------

struct ImputeOptions {
  std::size_t window = 0;  // requested window length; 0 = the model's
  bool sliding = false;    // allow window != model window by sliding the model's window
  std::size_t stride = 0;  // 0 = model window (non-overlapping plus a tail window)
  std::size_t threads = 1;
};

// Completed N x steps series in original units. Observed cells are copied
// from ds.values bit-for-bit; overlapping window predictions are averaged.
Eigen::MatrixXd impute(const model::ModelConfig& cfg, const model::ModelParams& params, const data::Dataset& ds,
                       const data::Mask& observed, const data::Standardizer& scaler, const ImputeOptions& opts = {});

// Window start positions covering [0, steps): every stride, plus a final
// window aligned to the end when the last stride leaves a tail.
std::vector<std::size_t> window_starts(std::size_t steps, std::size_t window, std::size_t stride);

struct EvalMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

EvalMetrics evaluate(const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& truth, const data::Mask& eval_mask);

// --- data preparation ----------------------------------------------------------

struct PreparedData {
  data::Standardizer scaler;
  std::vector<data::Window> train, val;
  data::TimeRange train_range, val_range, test_range;
};

// Chronological split, statistics from observed training cells, training
// windows with stride T/2 and validation windows with stride T.
PreparedData prepare(const data::Dataset& ds, const data::Mask& observed, std::size_t window,
                     const data::WhitenSpec& whiten, std::uint64_t seed, double train_frac = 0.7,
                     double val_frac = 0.1);

}  // namespace imputeformer::training
