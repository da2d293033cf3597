#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "imputeformer/baselines.hpp"
#include "imputeformer/training.hpp"

namespace imputeformer::training {
namespace {

model::ModelConfig tiny_config(std::size_t nodes = 4) {
  model::ModelConfig c;
  c.n_nodes = nodes;
  c.window = 8;
  c.input_hidden = 8;
  c.node_embed_total = 16;
  c.node_embed_key_dim = 4;
  c.model_dim = 16;
  c.projected_dim = 3;
  c.n_layers = 2;
  c.ffn_hidden = 32;
  c.steps_per_day = 8;
  return c;
}

struct Fixture {
  data::Dataset ds;
  data::Mask obs;
  PreparedData prep;
};

Fixture small_problem(std::uint64_t seed, double missing = 0.25) {
  Fixture f;
  f.ds = data::synth_lowrank(4, 160, 2, 0.05, 8, seed);
  data::MissingPatternSpec spec;
  spec.point_rate = missing;
  spec.seed = seed;
  f.obs = data::apply_missing(f.ds, spec);
  f.prep = prepare(f.ds, f.obs, 8, data::WhitenSpec::fixed_rate(0.25), seed);
  return f;
}

bool same_params(const model::ModelParams& a, const model::ModelParams& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t k = 0; k < a.entries().size(); ++k) {
    const auto& x = a.entries()[k].second;
    const auto& y = b.entries()[k].second;
    if (!std::equal(x.data().begin(), x.data().end(), y.data().begin(), y.data().end())) return false;
  }
  return true;
}

TEST(TrainConfig, JsonAndValidation) {
  TrainConfig c;
  c.lambda = 0.5;
  c.batch = 3;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"momentum", 0.9}}), ContractError);
  EXPECT_THROW(TrainConfig::from_json({{"lambda", -1.0}}), ContractError);
  EXPECT_THROW(TrainConfig::from_json({{"patience", 0}}), ContractError);
}

TEST(Schedule, CosineFromLrToFloor) {
  TrainConfig c;
  c.lr = 1e-3;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0, 101), 1e-3);
  EXPECT_NEAR(learning_rate(c, 50, 101), 0.5 * (1e-3 + 1e-5), 1e-15);
  EXPECT_NEAR(learning_rate(c, 100, 101), 1e-5, 1e-18);
  c.lr = 0.0;
  EXPECT_EQ(learning_rate(c, 7, 101), 0.0);
}

TEST(Adam, FirstStepMovesByLrAgainstGradientSign) {
  model::ModelParams p;
  p.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  TrainConfig c;
  Adam adam(p, c);
  adam.step(p, Gradients{{{0.2, -4.0, 0.0}}}, 0.1);
  EXPECT_NEAR(p["w"][0], 0.9, 1e-7);
  EXPECT_NEAR(p["w"][1], -1.9, 1e-7);
  EXPECT_EQ(p["w"][2], 0.5);
}

TEST(Clip, PreservesDirection) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Gradients grads{{std::vector<double>(7), std::vector<double>(5)}};
  for (auto& b : grads.values)
    for (auto& v : b) v = 10.0 * g(rng);
  const Gradients before = grads;
  const double n = clip_gradients(grads, 5.0);
  ASSERT_GT(n, 5.0);
  EXPECT_NEAR(grads.norm(), 5.0, 1e-12);
  const double ratio = grads.values[0][0] / before.values[0][0];
  EXPECT_GT(ratio, 0.0);
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t i = 0; i < grads.values[q].size(); ++i)
      EXPECT_NEAR(grads.values[q][i], ratio * before.values[q][i], 1e-12);
  Gradients small{{{0.1, 0.2}}};
  clip_gradients(small, 5.0);
  EXPECT_EQ(small.values[0][1], 0.2);
}

TEST(Train, ZeroLearningRateFreezesParameters) {
  auto f = small_problem(1);
  const auto cfg = tiny_config();
  const auto init = model::ModelParams::init(cfg, 3);
  TrainConfig tc;
  tc.lr = 0.0;
  tc.max_epochs = 3;
  const auto r = train(cfg, init, f.prep.train, f.prep.val, f.prep.scaler, data::WhitenSpec::fixed_rate(0.25), tc);
  EXPECT_GT(r.total_steps, 5u);
  EXPECT_TRUE(same_params(r.params, init));
}

TEST(Train, OverfitsASingleWindow) {
  auto f = small_problem(2, 0.0);
  const auto cfg = tiny_config();
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch = 1;
  tc.max_epochs = 500;
  tc.lambda = 0.0;
  const std::vector<data::Window> one{f.prep.train[0]};
  const auto r = train(cfg, model::ModelParams::init(cfg, 4), one, {}, f.prep.scaler,
                       data::WhitenSpec::fixed_rate(0.5), tc);
  ASSERT_EQ(r.steps.size(), 500u);
  // Whitening is resampled each step, so compare smoothed ends of the curve.
  double head = 0.0, tail = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    head += r.steps[k].recon;
    tail += r.steps[r.steps.size() - 1 - k].recon;
  }
  EXPECT_LT(tail, head / 10.0) << "first " << head / 10 << " last " << tail / 10;
}

TEST(Train, SeededRerunIsExactAcrossThreadCounts) {
  auto f = small_problem(3);
  const auto cfg = tiny_config();
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch = 4;
  tc.seed = 9;
  const auto spec = data::WhitenSpec::combined();
  const auto a = train(cfg, model::ModelParams::init(cfg, 5), f.prep.train, f.prep.val, f.prep.scaler, spec, tc);
  tc.threads = 3;
  const auto b = train(cfg, model::ModelParams::init(cfg, 5), f.prep.train, f.prep.val, f.prep.scaler, spec, tc);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].total, b.steps[k].total);
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].val_mae, b.history[k].val_mae);
  EXPECT_TRUE(same_params(a.params, b.params));
}

TEST(Train, EvalCellsNeverInfluenceTraining) {
  auto f = small_problem(4, 0.3);
  data::Dataset planted = f.ds;
  const data::Mask eval = planted.available && !f.obs;
  ASSERT_GT(eval.count(), 0);
  planted.values = eval.select(1e6, planted.values.array()).matrix();
  const auto cfg = tiny_config();
  TrainConfig tc;
  tc.max_epochs = 2;
  const auto spec = data::WhitenSpec::fixed_rate(0.25);
  auto run = [&](const data::Dataset& ds) {
    const auto prep = prepare(ds, f.obs, 8, spec, 4);
    return train(cfg, model::ModelParams::init(cfg, 6), prep.train, prep.val, prep.scaler, spec, tc);
  };
  const auto a = run(f.ds);
  const auto b = run(planted);
  EXPECT_TRUE(same_params(a.params, b.params));
  EXPECT_EQ(a.history.back().val_mae, b.history.back().val_mae);
}

TEST(Train, NonFiniteLossAbortsWithLastGoodParameters) {
  auto f = small_problem(5);
  const auto cfg = tiny_config();
  auto init = model::ModelParams::init(cfg, 7);
  // Finite parameters whose readout overflows to infinity.
  for (auto& v : init.at("readout.fc2.w").mutable_data()) v = 1e308;
  TrainConfig tc;
  tc.max_epochs = 2;
  try {
    train(cfg, init, f.prep.train, f.prep.val, f.prep.scaler, data::WhitenSpec::fixed_rate(0.25), tc);
    FAIL() << "expected an abort";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.step, 0u);
    EXPECT_TRUE(same_params(e.last_good, init));
  } catch (const NumericError&) {
    FAIL() << "expected a TrainingAborted";
  }
}

TEST(Train, RejectsDegenerateSetups) {
  auto f = small_problem(6);
  const auto cfg = tiny_config();
  const auto init = model::ModelParams::init(cfg, 1);
  TrainConfig tc;
  tc.max_epochs = 1;
  EXPECT_THROW(train(cfg, init, f.prep.train, f.prep.val, f.prep.scaler, data::WhitenSpec::fixed_rate(0.0), tc),
               ContractError);
  EXPECT_THROW(train(cfg, init, {}, f.prep.val, f.prep.scaler, data::WhitenSpec::fixed_rate(0.2), tc), ContractError);
  EXPECT_THROW(train(tiny_config(5), init, f.prep.train, {}, f.prep.scaler, data::WhitenSpec::fixed_rate(0.2), tc),
               DimensionError);
}

TEST(Impute, WindowStartsCoverTheTail) {
  EXPECT_EQ(window_starts(50, 24, 24), (std::vector<std::size_t>{0, 24, 26}));
  EXPECT_EQ(window_starts(48, 24, 24), (std::vector<std::size_t>{0, 24}));
  EXPECT_EQ(window_starts(10, 4, 3), (std::vector<std::size_t>{0, 3, 6}));
  EXPECT_THROW(window_starts(5, 8, 8), ContractError);
}

TEST(Impute, ObservedCellsPassThroughExactly) {
  auto f = small_problem(7);
  const auto cfg = tiny_config();
  const auto params = model::ModelParams::init(cfg, 8);
  const data::Mask all = data::Mask::Constant(4, 160, true);
  EXPECT_EQ(impute(cfg, params, f.ds, all, f.prep.scaler), f.ds.values);

  const auto out = impute(cfg, params, f.ds, f.obs, f.prep.scaler);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index t = 0; t < 160; ++t) {
      if (f.obs(i, t)) EXPECT_EQ(out(i, t), f.ds.values(i, t));
      else EXPECT_TRUE(std::isfinite(out(i, t)));
    }
  const data::Mask none = data::Mask::Constant(4, 160, false);
  EXPECT_TRUE(impute(cfg, params, f.ds, none, f.prep.scaler).allFinite());
}

TEST(Impute, WindowLengthMismatchNeedsSlidingMode) {
  auto f = small_problem(8);
  const auto cfg = tiny_config();
  const auto params = model::ModelParams::init(cfg, 9);
  ImputeOptions opts;
  opts.window = 12;
  EXPECT_THROW(impute(cfg, params, f.ds, f.obs, f.prep.scaler, opts), ContractError);
  opts.sliding = true;
  const auto out = impute(cfg, params, f.ds, f.obs, f.prep.scaler, opts);
  EXPECT_TRUE(out.allFinite());
  EXPECT_TRUE((f.obs.select(out.array() - f.ds.values.array(), 0.0) == 0.0).all());
  opts.threads = 2;
  EXPECT_EQ(impute(cfg, params, f.ds, f.obs, f.prep.scaler, opts), out);
}

TEST(Evaluate, HandExamples) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(2, 2), pred = truth;
  data::Mask m = data::Mask::Constant(2, 2, false);
  m(0, 0) = m(1, 1) = true;
  auto e = evaluate(pred, truth, m);
  EXPECT_EQ(e.mae, 0.0);
  EXPECT_EQ(e.rmse, 0.0);
  pred(0, 0) = 1.0;
  pred(1, 1) = -3.0;
  pred(0, 1) = 100.0;  // not evaluated
  e = evaluate(pred, truth, m);
  EXPECT_DOUBLE_EQ(e.mae, 2.0);
  EXPECT_DOUBLE_EQ(e.rmse, std::sqrt(5.0));
  EXPECT_EQ(e.count, 2u);
  e = evaluate(Eigen::MatrixXd::Constant(2, 2, 0.5), truth, m);
  EXPECT_DOUBLE_EQ(e.mae, 0.5);
  EXPECT_DOUBLE_EQ(e.rmse, 0.5);
  EXPECT_THROW(evaluate(pred, truth, data::Mask::Constant(2, 2, false)), ContractError);
}

// Half the cells missing from a noiseless rank-1 series: the trained model
// must beat per-sensor mean imputation.
TEST(Train, BeatsMeanImputationOnRankOne) {
  const auto ds = data::synth_lowrank(6, 480, 1, 0.0, 8, 10);
  data::MissingPatternSpec spec;
  spec.point_rate = 0.5;
  spec.seed = 11;
  const auto obs = data::apply_missing(ds, spec);
  const auto whiten = data::WhitenSpec::fixed_rate(0.25);
  const auto prep = prepare(ds, obs, 8, whiten, 12);
  const auto cfg = tiny_config(6);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.max_epochs = 25;
  tc.lambda = 0.0;
  const auto r = train(cfg, model::ModelParams::init(cfg, 13), prep.train, prep.val, prep.scaler, whiten, tc);
  const auto out = impute(cfg, r.params, ds, obs, prep.scaler);
  const data::Mask eval = ds.available && !obs;
  const double model_mae = evaluate(out, ds.values, eval).mae;
  const double mean_mae = evaluate(baselines::impute_mean(ds.values, obs), ds.values, eval).mae;
  EXPECT_LT(model_mae, mean_mae) << "model " << model_mae << " mean " << mean_mae;
}

}  // namespace
}  // namespace imputeformer::training
