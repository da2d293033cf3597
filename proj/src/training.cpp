#include "imputeformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "imputeformer/losses.hpp"

namespace imputeformer::training {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is assigned
// statically and every result lands in its own slot, so outputs do not
// depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t i = k; i < n; i += threads) fn(i);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}

bool all_finite(const Gradients& g) {
  for (const auto& buf : g.values)
    for (double v : buf)
      if (!std::isfinite(v)) return false;
  return true;
}

Tensor observed_target(const data::Window& w) {
  return Tensor::from_matrix(w.observed.select(w.y.array(), 0.0).matrix());
}

}  // namespace

// --- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("train config: lr must be finite and >= 0");
  if (!(lr_min >= 0.0)) throw ContractError("train config: lr_min must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("train config: adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ContractError("train config: adam_eps must be > 0");
  if (batch < 1) throw ContractError("train config: batch must be >= 1");
  if (patience < 1) throw ContractError("train config: patience must be >= 1");
  if (std::isnan(grad_clip)) throw ContractError("train config: grad_clip must be a number");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("train config: lambda must be finite and >= 0");
  if (threads < 1) throw ContractError("train config: threads must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},           {"lr_min", lr_min},         {"beta1", beta1},         {"beta2", beta2},
          {"adam_eps", adam_eps}, {"batch", batch},         {"max_epochs", max_epochs}, {"patience", patience},
          {"grad_clip", grad_clip}, {"lambda", lambda},     {"seed", seed},           {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("train config must be a JSON object");
  TrainConfig c;
  const std::map<std::string, double*> reals{{"lr", &c.lr},         {"lr_min", &c.lr_min},
                                             {"beta1", &c.beta1},   {"beta2", &c.beta2},
                                             {"adam_eps", &c.adam_eps}, {"grad_clip", &c.grad_clip},
                                             {"lambda", &c.lambda}};
  const std::map<std::string, std::size_t*> counts{
      {"batch", &c.batch}, {"max_epochs", &c.max_epochs}, {"patience", &c.patience}, {"threads", &c.threads}};
  for (const auto& [key, value] : j.items()) {
    if (auto r = reals.find(key); r != reals.end()) {
      if (!value.is_number()) throw ContractError("train config: '" + key + "' must be a number");
      *r->second = value.get<double>();
    } else if (auto n = counts.find(key); n != counts.end()) {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw ContractError("train config: '" + key + "' must be a non-negative integer");
      *n->second = value.get<std::size_t>();
    } else if (key == "seed") {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw ContractError("train config: 'seed' must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else {
      throw ContractError("train config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

// --- optimization --------------------------------------------------------------

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& buf : values)
    for (double v : buf) s += v * v;
  return std::sqrt(s);
}

double clip_gradients(Gradients& g, double max_norm) {
  const double n = g.norm();
  if (max_norm > 0.0 && n > max_norm) {
    const double f = max_norm / n;
    for (auto& buf : g.values)
      for (auto& v : buf) v *= f;
  }
  return n;
}

Adam::Adam(const model::ModelParams& params, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
  for (const auto& [name, t] : params.entries()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(model::ModelParams& params, const Gradients& g, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (const auto& entry : params.entries()) {
    auto data = params.at(entry.first).mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& grad = g.values[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    ++k;
  }
}

double learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  const double floor = std::min(cfg.lr_min, cfg.lr);
  if (total_steps <= 1) return cfg.lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

WindowLoss window_loss(const model::ModelConfig& cfg, const model::ModelParams& params, const data::Window& w,
                       double lambda) {
  Tape tape;
  const auto bound = params.bind(tape);
  const Tensor pred = model::forward(cfg, bound, w);
  const auto b = losses::total_loss(pred, observed_target(w), w.whiten, w.observed, w.whiten || !w.observed, lambda);
  tape.backward(b.total);
  WindowLoss out{b.recon.item(), b.fil.item(), b.total.item(), {}};
  for (const auto& [name, t] : bound.entries()) out.grads.values.emplace_back(t.grad().begin(), t.grad().end());
  return out;
}

double validation_mae(const model::ModelConfig& cfg, const model::ModelParams& params,
                      const std::vector<data::Window>& windows, const data::Standardizer& scaler,
                      std::size_t threads) {
  std::vector<double> sums(windows.size(), 0.0);
  std::vector<std::size_t> counts(windows.size(), 0);
  parallel_for(windows.size(), threads, [&](std::size_t k) {
    const auto& w = windows[k];
    const Tensor pred = model::forward(cfg, params, w);
    for (Eigen::Index i = 0; i < w.nodes(); ++i)
      for (Eigen::Index t = 0; t < w.length(); ++t) {
        if (!w.whiten(i, t)) continue;
        const double err = pred[static_cast<std::size_t>(i * w.length() + t)] - w.y(i, t);
        sums[k] += std::abs(err) * scaler.std(i);
        ++counts[k];
      }
  });
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  const auto n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

TrainResult train(const model::ModelConfig& cfg, model::ModelParams init, std::vector<data::Window> train_windows,
                  const std::vector<data::Window>& val_windows, const data::Standardizer& scaler,
                  const data::WhitenSpec& whiten, const TrainConfig& tc, const EpochCallback& on_epoch) {
  cfg.validate();
  tc.validate();
  whiten.validate();
  init.check(cfg);
  if (train_windows.empty()) throw ContractError("train: no training windows");
  if (whiten.mode == data::WhitenSpec::Mode::fixed && whiten.rate <= 0.0)
    throw ContractError("train: whitening rate 0 leaves nothing to supervise");

  // Never mutate the caller's tensors.
  model::ModelParams params = init.detach();
  Adam adam(params, tc);
  const std::size_t n = train_windows.size();
  const std::size_t per_epoch = (n + tc.batch - 1) / tc.batch;
  const std::size_t total_steps = per_epoch * tc.max_epochs;

  TrainResult result;
  result.params = params.detach();
  result.best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    auto rng = epoch_rng(tc.seed, epoch);
    for (auto& w : train_windows) data::resample_whiten(w, whiten, rng);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_recon = 0.0, epoch_fil = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * tc.batch, end = std::min(n, begin + tc.batch);
      std::vector<WindowLoss> parts(end - begin);
      parallel_for(parts.size(), tc.threads, [&](std::size_t k) {
        parts[k] = window_loss(cfg, params, train_windows[order[begin + k]], tc.lambda);
      });

      // Ordered reduction: sum in batch position order, then average.
      Gradients g = std::move(parts[0].grads);
      StepRecord rec{step, parts[0].recon, parts[0].fil, parts[0].total};
      for (std::size_t k = 1; k < parts.size(); ++k) {
        for (std::size_t q = 0; q < g.values.size(); ++q)
          for (std::size_t i = 0; i < g.values[q].size(); ++i) g.values[q][i] += parts[k].grads.values[q][i];
        rec.recon += parts[k].recon;
        rec.fil += parts[k].fil;
        rec.total += parts[k].total;
      }
      const double inv = 1.0 / static_cast<double>(parts.size());
      for (auto& buf : g.values)
        for (auto& v : buf) v *= inv;
      rec.recon *= inv;
      rec.fil *= inv;
      rec.total *= inv;

      if (!std::isfinite(rec.total) || !all_finite(g)) {
        throw TrainingAborted("train: non-finite loss or gradient at step " + std::to_string(step) + " (epoch " +
                                  std::to_string(epoch) + ")",
                              params.detach(), step);
      }
      clip_gradients(g, tc.grad_clip);
      adam.step(params, g, learning_rate(tc, step, total_steps));
      result.steps.push_back(rec);
      epoch_recon += rec.recon;
      epoch_fil += rec.fil;
      ++step;
    }

    EpochRecord er{epoch, epoch_recon / static_cast<double>(per_epoch), epoch_fil / static_cast<double>(per_epoch),
                   std::numeric_limits<double>::quiet_NaN()};
    if (!val_windows.empty()) er.val_mae = validation_mae(cfg, params, val_windows, scaler, tc.threads);
    result.history.push_back(er);
    if (on_epoch) on_epoch(er);

    if (std::isnan(er.val_mae)) {
      result.params = params.detach();
      result.best_epoch = epoch;
      result.best_val_mae = er.val_mae;
      continue;
    }
    if (er.val_mae < result.best_val_mae) {
      result.best_val_mae = er.val_mae;
      result.best_epoch = epoch;
      result.params = params.detach();
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.total_steps = step;
  return result;
}

// --- inference ---------------------------------------------------------------

std::vector<std::size_t> window_starts(std::size_t steps, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ContractError("window_starts: window and stride must be >= 1");
  if (steps < window)
    throw ContractError("series of " + std::to_string(steps) + " steps is shorter than the window (" +
                        std::to_string(window) + ")");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= steps; s += stride) starts.push_back(s);
  if (starts.back() + window < steps) starts.push_back(steps - window);
  return starts;
}

Eigen::MatrixXd impute(const model::ModelConfig& cfg, const model::ModelParams& params, const data::Dataset& ds,
                       const data::Mask& observed, const data::Standardizer& scaler, const ImputeOptions& opts) {
  const Eigen::Index N = ds.nodes(), steps = ds.steps();
  if (static_cast<std::size_t>(N) != cfg.n_nodes)
    throw DimensionError("impute: data has " + std::to_string(N) + " sensors, model expects " +
                         std::to_string(cfg.n_nodes));
  if (observed.rows() != N || observed.cols() != steps) throw DimensionError("impute: mask shape does not match data");
  if (scaler.mean.size() != N) throw DimensionError("impute: normalization stats do not match data");
  const std::size_t T = cfg.window;
  const std::size_t requested = opts.window == 0 ? T : opts.window;
  if (requested != T && !opts.sliding)
    throw ContractError("impute: window length " + std::to_string(requested) + " differs from the model's " +
                        std::to_string(T) + "; enable sliding mode to run the model's window over the series");
  std::size_t stride = opts.stride;
  if (stride == 0) stride = (requested != T) ? 1 : T;

  const data::Mask input = observed && ds.available;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(N, steps);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 0; t < steps; ++t)
      if (input(i, t)) x(i, t) = scaler.normalize(i, ds.values(i, t));

  const auto starts = window_starts(static_cast<std::size_t>(steps), T, stride);
  std::vector<Eigen::MatrixXd> preds(starts.size());
  const auto Te = static_cast<Eigen::Index>(T);
  parallel_for(starts.size(), opts.threads, [&](std::size_t k) {
    const auto s = static_cast<Eigen::Index>(starts[k]);
    const Tensor xt = Tensor::from_matrix(x.middleCols(s, Te));
    preds[k] = model::forward(cfg, params, xt, input.middleCols(s, Te), s).to_matrix();
  });

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(N, steps);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(steps);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto s = static_cast<Eigen::Index>(starts[k]);
    sum.middleCols(s, Te) += preds[k];
    count.segment(s, Te).array() += 1.0;
  }
  Eigen::MatrixXd out(N, steps);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 0; t < steps; ++t)
      out(i, t) = input(i, t) ? ds.values(i, t) : scaler.denormalize(i, sum(i, t) / count(t));
  return out;
}

EvalMetrics evaluate(const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& truth, const data::Mask& eval_mask) {
  if (imputed.rows() != truth.rows() || imputed.cols() != truth.cols() || eval_mask.rows() != truth.rows() ||
      eval_mask.cols() != truth.cols())
    throw DimensionError("evaluate: prediction, truth and mask shapes differ");
  EvalMetrics m;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i)
    for (Eigen::Index t = 0; t < truth.cols(); ++t) {
      if (!eval_mask(i, t)) continue;
      const double e = imputed(i, t) - truth(i, t);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      ++m.count;
    }
  if (m.count == 0) throw ContractError("evaluate: no evaluable cells in the evaluation mask");
  m.mae = abs_sum / static_cast<double>(m.count);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(m.count));
  return m;
}

PreparedData prepare(const data::Dataset& ds, const data::Mask& observed, std::size_t window,
                     const data::WhitenSpec& whiten, std::uint64_t seed, double train_frac, double val_frac) {
  PreparedData p;
  const auto split = data::split_time(ds.steps(), train_frac, val_frac);
  p.train_range = split[0];
  p.val_range = split[1];
  p.test_range = split[2];
  p.scaler = data::Standardizer::fit(ds, observed, p.train_range.begin, p.train_range.end);
  const auto T = static_cast<Eigen::Index>(window);
  p.train = data::make_windows(ds, observed, p.scaler, {T, std::max<Eigen::Index>(1, T / 2), p.train_range}, whiten,
                               seed);
  if (p.val_range.size() >= T)
    p.val = data::make_windows(ds, observed, p.scaler, {T, T, p.val_range}, whiten, seed + 1);
  return p;
}

}  // namespace imputeformer::training
