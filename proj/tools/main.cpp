// imputeformer: synth | mask | train | impute | eval | spectrum | bench
//
// Machine output goes to stdout or files, logs to stderr. Failures print a
// JSON object on stderr and exit with 2 (numeric abort), 3 (bad config or
// input) or 1 (anything else).

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "bench.hpp"
#include "imputeformer/baselines.hpp"
#include "imputeformer/data.hpp"
#include "imputeformer/model.hpp"
#include "imputeformer/runtime.hpp"
#include "imputeformer/spectral.hpp"
#include "imputeformer/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace imputeformer;

namespace {

constexpr int kExitNumeric = 2;
constexpr int kExitConfig = 3;

// CI fuzzing hook: overrides every --seed / config seed.
std::uint64_t resolve_seed(std::uint64_t seed) {
  if (const char* env = std::getenv("IMPUTEFORMER_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ContractError(std::string("IMPUTEFORMER_SEED is not an unsigned integer: ") + env);
    }
  }
  return seed;
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string sibling(const fs::path& base, const std::string& suffix) { return base.string() + suffix; }

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ContractError(where + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw ContractError(where + ": unknown key '" + k + "'");
  }
}

// --- run config ----------------------------------------------------------------

json whiten_to_json(const data::WhitenSpec& w) {
  if (w.mode == data::WhitenSpec::Mode::combined) return {{"mode", "combined"}, {"rates", w.combined_rates}};
  return {{"mode", "fixed"}, {"rate", w.rate}};
}

data::WhitenSpec whiten_from_json(const json& j) {
  reject_unknown(j, {"mode", "rate", "rates"}, "missing.whiten");
  data::WhitenSpec w;
  const std::string mode = j.value("mode", "fixed");
  if (mode == "fixed") {
    if (j.contains("rates")) throw ContractError("missing.whiten: 'rates' only applies to mode 'combined'");
    w.mode = data::WhitenSpec::Mode::fixed;
    w.rate = j.value("rate", w.rate);
  } else if (mode == "combined") {
    if (j.contains("rate")) throw ContractError("missing.whiten: 'rate' only applies to mode 'fixed'");
    w = data::WhitenSpec::combined();
    if (j.contains("rates")) w.combined_rates = j.at("rates").get<std::vector<double>>();
  } else {
    throw ContractError("missing.whiten.mode must be 'fixed' or 'combined', got '" + mode + "'");
  }
  w.validate();
  return w;
}

json missing_to_json(const data::MissingPatternSpec& m) {
  return {{"pattern", m.kind == data::MissingKind::point ? "point" : "block"},
          {"point_rate", m.point_rate},
          {"drop_rate", m.drop_rate},
          {"failure_prob", m.failure_prob},
          {"min_duration", m.min_duration},
          {"max_duration", m.max_duration},
          {"whiten", whiten_to_json(m.whiten)}};
}

data::MissingPatternSpec missing_from_json(const json& j) {
  reject_unknown(j, {"pattern", "point_rate", "drop_rate", "failure_prob", "min_duration", "max_duration", "whiten"},
                 "missing");
  data::MissingPatternSpec m;
  const std::string pattern = j.value("pattern", "point");
  if (pattern == "point") m.kind = data::MissingKind::point;
  else if (pattern == "block") m.kind = data::MissingKind::block;
  else throw ContractError("missing.pattern must be 'point' or 'block', got '" + pattern + "'");
  m.point_rate = j.value("point_rate", m.point_rate);
  m.drop_rate = j.value("drop_rate", m.drop_rate);
  m.failure_prob = j.value("failure_prob", m.failure_prob);
  m.min_duration = j.value("min_duration", m.min_duration);
  m.max_duration = j.value("max_duration", m.max_duration);
  if (j.contains("whiten")) m.whiten = whiten_from_json(j.at("whiten"));
  m.validate();
  return m;
}

struct RunConfig {
  fs::path data;
  std::optional<fs::path> mask;  // absent: simulate `missing` on the data
  std::uint64_t seed = 0;
  model::ModelConfig model;
  training::TrainConfig train;
  data::MissingPatternSpec missing;
  double train_frac = 0.7;
  double val_frac = 0.1;
  std::vector<double> lambda_sweep;  // empty: train once with train.lambda

  json to_json() const {
    json j = {{"data", data.string()},
              {"seed", seed},
              {"model", model.to_json()},
              {"train", train.to_json()},
              {"missing", missing_to_json(missing)},
              {"split", {{"train", train_frac}, {"val", val_frac}}},
              {"windows", {{"train_stride", model.window / 2 > 0 ? model.window / 2 : 1}, {"eval_stride", model.window}}},
              {"fil_mask", "whitened_or_unobserved"},
              {"lambda_sweep", lambda_sweep}};
    j["mask"] = mask ? json(mask->string()) : json(nullptr);
    return j;
  }
};

// Relative paths resolve against the config file's directory.
fs::path resolve_path(const fs::path& config_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : config_dir / path;
}

RunConfig run_config_from_json(const json& j, const fs::path& config_dir, Eigen::Index data_nodes_hint) {
  reject_unknown(j, {"data", "mask", "seed", "model", "train", "missing", "split", "windows", "fil_mask",
                     "lambda_sweep"},
                 "run config");
  RunConfig rc;
  if (!j.contains("data")) throw ContractError("run config: 'data' path is required");
  rc.data = resolve_path(config_dir, j.at("data").get<std::string>());
  if (j.contains("mask") && !j.at("mask").is_null()) rc.mask = resolve_path(config_dir, j.at("mask").get<std::string>());
  rc.seed = j.value("seed", std::uint64_t{0});

  json model = j.value("model", json::object());
  if (!model.is_object()) throw ContractError("run config: 'model' must be an object");
  if (!model.contains("n_nodes") && data_nodes_hint > 0) model["n_nodes"] = data_nodes_hint;
  rc.model = model::ModelConfig::from_json(model);
  rc.train = training::TrainConfig::from_json(j.value("train", json::object()));
  if (j.contains("missing")) rc.missing = missing_from_json(j.at("missing"));

  if (j.contains("split")) {
    const auto& s = j.at("split");
    reject_unknown(s, {"train", "val"}, "split");
    rc.train_frac = s.value("train", rc.train_frac);
    rc.val_frac = s.value("val", rc.val_frac);
  }
  if (j.contains("windows")) {
    // Strides are fixed by the pipeline; accepted only so resolved configs round-trip.
    const auto& w = j.at("windows");
    reject_unknown(w, {"train_stride", "eval_stride"}, "windows");
    const std::size_t t = rc.model.window;
    if (w.value("train_stride", std::max<std::size_t>(1, t / 2)) != std::max<std::size_t>(1, t / 2) ||
        w.value("eval_stride", t) != t)
      throw ContractError("windows: strides are fixed at T/2 (train) and T (eval)");
  }
  if (j.contains("fil_mask") && j.at("fil_mask") != "whitened_or_unobserved")
    throw ContractError("fil_mask: only 'whitened_or_unobserved' is supported");
  if (j.contains("lambda_sweep")) rc.lambda_sweep = j.at("lambda_sweep").get<std::vector<double>>();
  for (const double l : rc.lambda_sweep)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ContractError("lambda_sweep: values must be finite and >= 0");

  rc.model.validate();
  rc.train.validate();
  if (!(rc.train.lr > 0.0)) throw ContractError("train.lr must be > 0");
  const auto& w = rc.missing.whiten;
  if (w.mode == data::WhitenSpec::Mode::fixed && w.rate <= 0.0)
    throw ContractError("missing.whiten.rate must be > 0 for training (nothing to reconstruct otherwise)");
  if (!(rc.train_frac > 0.0) || !(rc.val_frac >= 0.0) || rc.train_frac + rc.val_frac >= 1.0)
    throw ContractError("split: need train > 0, val >= 0 and train + val < 1");
  return rc;
}

// --- CSV helpers -------------------------------------------------------------------

void write_history(const fs::path& path, const std::vector<training::EpochRecord>& h) {
  std::string out = "epoch,train_recon,train_fil,val_mae\n";
  for (const auto& e : h)
    out += std::to_string(e.epoch) + ',' + data::format_double(e.train_recon) + ',' + data::format_double(e.train_fil) +
           ',' + data::format_double(e.val_mae) + '\n';
  data::write_file(path, out);
}

void write_metrics(const fs::path& path, const std::vector<training::StepRecord>& steps) {
  std::string out = "step,recon,fil,total\n";
  for (const auto& s : steps)
    out += std::to_string(s.step) + ',' + data::format_double(s.recon) + ',' + data::format_double(s.fil) + ',' +
           data::format_double(s.total) + '\n';
  data::write_file(path, out);
}

// Observed = marked in the mask file and present in the data.
data::Mask observed_mask(const data::Dataset& ds, const std::optional<fs::path>& mask_path) {
  if (!mask_path) return ds.available;
  const data::Mask m = data::load_mask_csv(*mask_path);
  if (m.rows() != ds.nodes() || m.cols() != ds.steps())
    throw DimensionError("mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " but data is " +
                         std::to_string(ds.nodes()) + "x" + std::to_string(ds.steps()) + " (sensors x steps)");
  return m && ds.available;
}

Tensor vector_tensor(const Eigen::VectorXd& v) {
  return Tensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd tensor_vector(const Tensor& t) {
  const auto d = t.data();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

data::Standardizer scaler_from(const model::Checkpoint& ck) {
  data::Standardizer s;
  for (const auto& [name, t] : ck.extras) {
    if (name == "norm.mean") s.mean = tensor_vector(t);
    if (name == "norm.std") s.std = tensor_vector(t);
  }
  const auto n = static_cast<Eigen::Index>(ck.config.n_nodes);
  if (s.mean.size() != n || s.std.size() != n)
    throw ContractError("checkpoint lacks normalization statistics for " + std::to_string(n) + " sensors");
  return s;
}

// --- subcommands -----------------------------------------------------------------

struct SynthArgs {
  long nodes = 32, steps = 2880, rank = 5;
  double noise = 0.1;
  int steps_per_day = 24;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto ds = data::synth_lowrank(a.nodes, a.steps, a.rank, a.noise, a.steps_per_day, seed);
  data::save_csv(a.out, ds);
  const json manifest = {{"generator", "synth_lowrank"},
                         {"nodes", a.nodes},
                         {"steps", a.steps},
                         {"rank", a.rank},
                         {"noise", a.noise},
                         {"steps_per_day", a.steps_per_day},
                         {"seed", seed},
                         {"file", fs::path(a.out).filename().string()}};
  data::write_file(sibling(a.out, ".manifest.json"), manifest.dump(2) + '\n');
  log("synth: wrote " + a.out);
  return 0;
}

struct MaskArgs {
  std::string pattern = "point";
  double rate = 0.25, drop_rate = 0.05, failure_prob = 0.0015;
  int min_duration = 12, max_duration = 48;
  std::uint64_t seed = 0;
  std::string in, out;
};

int cmd_mask(const MaskArgs& a) {
  const auto ds = data::load_csv(a.in);
  data::MissingPatternSpec spec;
  if (a.pattern == "point") spec.kind = data::MissingKind::point;
  else if (a.pattern == "block") spec.kind = data::MissingKind::block;
  else throw ContractError("--pattern must be point or block");
  spec.point_rate = a.rate;
  spec.drop_rate = a.drop_rate;
  spec.failure_prob = a.failure_prob;
  spec.min_duration = a.min_duration;
  spec.max_duration = a.max_duration;
  spec.seed = resolve_seed(a.seed);
  spec.validate();
  const data::Mask m = data::apply_missing(ds, spec);
  data::save_mask_csv(a.out, m, ds.sensor_ids);
  std::ostringstream msg;
  msg << "mask: " << (1.0 - static_cast<double>(m.count()) / static_cast<double>(m.size())) * 100.0
      << "% of cells unobserved";
  log(msg.str());
  return 0;
}

struct TrainArgs {
  std::string config, out;
  std::size_t threads = 0;  // 0: from config
};

int cmd_train(const TrainArgs& a) {
  const fs::path cfg_path(a.config);
  const json raw = read_json(cfg_path);
  const fs::path dir = cfg_path.parent_path();
  // Peek at the data to default n_nodes.
  if (!raw.is_object() || !raw.contains("data")) throw ContractError("run config: 'data' path is required");
  const int spd = raw.value("model", json::object()).value("steps_per_day", 24);
  const auto ds = data::load_csv(resolve_path(dir, raw.at("data").get<std::string>()), spd);
  RunConfig rc = run_config_from_json(raw, dir, ds.nodes());
  rc.seed = resolve_seed(rc.seed);
  rc.train.seed = rc.seed;
  if (a.threads > 0) rc.train.threads = a.threads;
  if (static_cast<Eigen::Index>(rc.model.n_nodes) != ds.nodes())
    throw DimensionError("model.n_nodes = " + std::to_string(rc.model.n_nodes) + " but data has " +
                         std::to_string(ds.nodes()) + " sensors");

  data::Mask observed;
  if (rc.mask) {
    observed = observed_mask(ds, rc.mask);
  } else {
    auto spec = rc.missing;
    spec.seed = rc.seed;
    observed = data::apply_missing(ds, spec);
  }

  const fs::path out(a.out);
  data::write_file(sibling(out, ".config.json"), rc.to_json().dump(2) + '\n');

  const auto prep = training::prepare(ds, observed, rc.model.window, rc.missing.whiten, rc.seed, rc.train_frac,
                                      rc.val_frac);
  if (prep.train.empty()) throw ContractError("training split is shorter than one window");
  log("train: " + std::to_string(prep.train.size()) + " training / " + std::to_string(prep.val.size()) +
      " validation windows");

  const auto init = model::ModelParams::init(rc.model, rc.seed);
  model::Checkpoint ck;
  ck.config = rc.model;
  ck.seed = rc.seed;
  ck.extras = {{"norm.mean", vector_tensor(prep.scaler.mean)}, {"norm.std", vector_tensor(prep.scaler.std)}};

  auto run_one = [&](const training::TrainConfig& tc) {
    try {
      return training::train(rc.model, init, prep.train, prep.val, prep.scaler, rc.missing.whiten, tc,
                             [&](const training::EpochRecord& e) {
                               std::ostringstream msg;
                               msg << "epoch " << e.epoch << " recon " << e.train_recon << " fil " << e.train_fil
                                   << " val_mae " << e.val_mae;
                               log(msg.str());
                             });
    } catch (const training::TrainingAborted& e) {
      model::Checkpoint bad = ck;
      bad.params = e.last_good;
      bad.step = e.step;
      bad.metadata = {{"aborted", true}, {"train", tc.to_json()}};
      save_checkpoint(sibling(out, ".last_good"), bad);
      throw;
    }
  };

  training::TrainResult result;
  json sweep = json::array();
  if (rc.lambda_sweep.empty()) {
    result = run_one(rc.train);
  } else {
    // One model per lambda; the checkpoint keeps the best validation score.
    std::string table = "lambda,best_val_mae,best_epoch\n";
    bool have = false;
    double chosen = 0.0;
    for (const double lambda : rc.lambda_sweep) {
      auto tc = rc.train;
      tc.lambda = lambda;
      log("train: lambda " + data::format_double(lambda));
      auto r = run_one(tc);
      table += data::format_double(lambda) + ',' + data::format_double(r.best_val_mae) + ',' +
               std::to_string(r.best_epoch) + '\n';
      if (!have || r.best_val_mae < result.best_val_mae) {
        result = std::move(r);
        chosen = lambda;
        have = true;
      }
    }
    data::write_file(sibling(out, ".sweep.csv"), table);
    rc.train.lambda = chosen;
  }

  ck.params = result.params;
  ck.step = result.total_steps;
  ck.metadata = {{"train", rc.train.to_json()},
                 {"missing", missing_to_json(rc.missing)},
                 {"split", {{"train", rc.train_frac}, {"val", rc.val_frac}}},
                 {"best_epoch", result.best_epoch},
                 {"best_val_mae", std::isfinite(result.best_val_mae) ? json(result.best_val_mae) : json(nullptr)},
                 {"stopped_early", result.stopped_early}};
  save_checkpoint(out, ck);
  write_history(sibling(out, ".history.csv"), result.history);
  write_metrics(sibling(out, ".metrics.csv"), result.steps);
  log("train: wrote " + out.string());
  return 0;
}

struct ImputeArgs {
  std::string checkpoint, in, mask, out;
  std::string baseline = "model";
  std::size_t window = 0, stride = 0, threads = 1;
  bool sliding = false;
  long rank = 5;
  double reg = 1e-3;
  int iters = 50;
  std::uint64_t seed = 0;
};

int cmd_impute(const ImputeArgs& a) {
  std::optional<fs::path> mask_path;
  if (!a.mask.empty()) mask_path = a.mask;
  Eigen::MatrixXd completed;
  data::Dataset ds;
  data::Mask observed;
  if (a.baseline == "model") {
    if (a.checkpoint.empty()) throw ContractError("impute: --model is required unless --baseline is given");
    const auto ck = model::load_checkpoint(a.checkpoint);
    ds = data::load_csv(a.in, static_cast<int>(ck.config.steps_per_day));
    observed = observed_mask(ds, mask_path);
    training::ImputeOptions opts;
    opts.window = a.window;
    opts.sliding = a.sliding;
    opts.stride = a.stride;
    opts.threads = a.threads;
    completed = training::impute(ck.config, ck.params, ds, observed, scaler_from(ck), opts);
  } else {
    ds = data::load_csv(a.in);
    observed = observed_mask(ds, mask_path);
    if (a.baseline == "mean") {
      completed = baselines::impute_mean(ds.values, observed);
    } else if (a.baseline == "linear") {
      completed = baselines::impute_linear(ds.values, observed);
    } else if (a.baseline == "als") {
      baselines::AlsOptions o;
      o.rank = a.rank;
      o.reg = a.reg;
      o.iters = a.iters;
      o.seed = resolve_seed(a.seed);
      completed = baselines::impute_als(ds.values, observed, o).completed;
    } else {
      throw ContractError("--baseline must be model, mean, linear or als");
    }
  }
  data::save_matrix_csv(a.out, completed, ds.sensor_ids);
  log("impute: wrote " + a.out);
  return 0;
}

struct EvalArgs {
  std::string pred, truth, mask;
  std::string split = "all";
  double train_frac = 0.7, val_frac = 0.1;
};

int cmd_eval(const EvalArgs& a) {
  const auto pred = data::load_csv(a.pred);
  const auto truth = data::load_csv(a.truth);
  if (pred.nodes() != truth.nodes() || pred.steps() != truth.steps())
    throw DimensionError("prediction and truth differ in shape");
  const data::Mask observed = observed_mask(truth, a.mask);
  data::Mask eval = truth.available && !observed;
  if ((eval && !pred.available).any()) throw ContractError("prediction leaves evaluated cells empty");
  if (a.split != "all") {
    const auto ranges = data::split_time(truth.steps(), a.train_frac, a.val_frac);
    const data::TimeRange* keep = nullptr;
    if (a.split == "train") keep = &ranges[0];
    else if (a.split == "val") keep = &ranges[1];
    else if (a.split == "test") keep = &ranges[2];
    else throw ContractError("--split must be all, train, val or test");
    eval.leftCols(keep->begin).setConstant(false);
    eval.rightCols(truth.steps() - keep->end).setConstant(false);
  }
  const auto m = training::evaluate(pred.values, truth.values, eval);
  std::cout << json{{"mae", m.mae}, {"rmse", m.rmse}, {"count", m.count}}.dump() << '\n';
  return 0;
}

int cmd_spectrum(const std::string& in, const std::string& out) {
  const auto ds = data::load_csv(in);
  if (!ds.available.all()) throw ContractError("spectrum: matrix has empty cells; impute it first");
  const auto s = spectral::svd_values(ds.values);
  const auto energy = s.cumulative_energy();
  std::string text = "index,singular_value,cumulative_energy\n";
  for (std::size_t k = 0; k < s.values.size(); ++k)
    text += std::to_string(k + 1) + ',' + data::format_double(s.values[k]) + ',' + data::format_double(energy[k]) + '\n';
  data::write_file(out, text);
  return 0;
}

int cmd_bench(bench::BenchOptions opts, const std::string& attention) {
  opts.attention = bench::parse_attention(attention);
  opts.seed = resolve_seed(opts.seed);
  const auto rows = bench::run(opts);
  std::cout << "size,factorized_ms,canonical_ms\n";
  for (const auto& r : rows)
    std::cout << r.size << ',' << data::format_double(r.factorized_ms) << ','
              << (std::isnan(r.canonical_ms) ? std::string() : data::format_double(r.canonical_ms)) << '\n';
  for (std::size_t k = 1; k < rows.size(); ++k) {
    std::ostringstream msg;
    msg << "bench: size " << rows[k - 1].size << " -> " << rows[k].size << ": factorized x"
        << rows[k].factorized_ms / rows[k - 1].factorized_ms;
    if (opts.control) msg << ", canonical x" << rows[k].canonical_ms / rows[k - 1].canonical_ms;
    log(msg.str());
  }
  return 0;
}

int fail(const char* kind, const std::string& what, int code, json extra = json::object()) {
  extra["error"] = kind;
  extra["message"] = what;
  std::cerr << extra.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"ImputeFormer: low-rank transformer for spatiotemporal imputation"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a low-rank synthetic dataset");
  synth->add_option("--nodes", sa.nodes)->check(CLI::PositiveNumber);
  synth->add_option("--steps", sa.steps)->check(CLI::PositiveNumber);
  synth->add_option("--rank", sa.rank)->check(CLI::PositiveNumber);
  synth->add_option("--noise", sa.noise, "Noise std relative to the signal std");
  synth->add_option("--steps-per-day", sa.steps_per_day)->check(CLI::PositiveNumber);
  synth->add_option("--seed", sa.seed);
  synth->add_option("-o,--out", sa.out)->required();

  MaskArgs ma;
  auto* mask = app.add_subcommand("mask", "Simulate a missing pattern; writes the observation mask");
  mask->add_option("--pattern", ma.pattern)->check(CLI::IsMember({"point", "block"}));
  mask->add_option("--rate", ma.rate, "Point-missing rate");
  mask->add_option("--drop-rate", ma.drop_rate, "Block pattern: i.i.d. drop rate");
  mask->add_option("--failure-prob", ma.failure_prob, "Block pattern: failure start probability per step");
  mask->add_option("--min-duration", ma.min_duration);
  mask->add_option("--max-duration", ma.max_duration);
  mask->add_option("--seed", ma.seed);
  mask->add_option("-i,--in", ma.in)->required();
  mask->add_option("-o,--out", ma.out)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train from a JSON run config");
  train->add_option("-c,--config", ta.config)->required();
  train->add_option("-o,--out", ta.out, "Checkpoint path; side files use it as prefix")->required();

  ImputeArgs ia;
  auto* impute = app.add_subcommand("impute", "Complete a series with a checkpoint or a baseline");
  impute->add_option("-m,--model", ia.checkpoint);
  impute->add_option("-i,--in", ia.in)->required();
  impute->add_option("--mask", ia.mask, "Observation mask (default: every non-empty cell)");
  impute->add_option("-o,--out", ia.out)->required();
  impute->add_option("--window", ia.window, "Window length (must match the checkpoint unless --sliding)");
  impute->add_flag("--sliding", ia.sliding, "Slide the checkpoint's window over other lengths");
  impute->add_option("--stride", ia.stride);
  impute->add_option("--baseline", ia.baseline)->check(CLI::IsMember({"model", "mean", "linear", "als"}));
  impute->add_option("--rank", ia.rank, "ALS rank")->check(CLI::PositiveNumber);
  impute->add_option("--reg", ia.reg, "ALS ridge");
  impute->add_option("--iters", ia.iters, "ALS iterations")->check(CLI::PositiveNumber);
  impute->add_option("--seed", ia.seed);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "MAE/RMSE on cells hidden by the mask; JSON on stdout");
  eval->add_option("--pred", ea.pred)->required();
  eval->add_option("--truth", ea.truth)->required();
  eval->add_option("--mask", ea.mask)->required();
  eval->add_option("--split", ea.split, "Restrict to a chronological split")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  eval->add_option("--train-frac", ea.train_frac);
  eval->add_option("--val-frac", ea.val_frac);

  std::string spec_in, spec_out;
  auto* spectrum = app.add_subcommand("spectrum", "Singular values and cumulative energy of a matrix CSV");
  spectrum->add_option("-i,--in", spec_in)->required();
  spectrum->add_option("-o,--out", spec_out)->required();

  bench::BenchOptions bo;
  std::string attention = "temporal";
  bool no_control = false;
  auto* benchcmd = app.add_subcommand("bench", "Attention timing table (CSV on stdout)");
  benchcmd->add_option("--attention", attention)->check(CLI::IsMember({"temporal", "spatial"}));
  benchcmd->add_option("--sizes", bo.sizes, "T (temporal) or N (spatial) values")->delimiter(',');
  benchcmd->add_option("--reps", bo.reps)->check(CLI::PositiveNumber);
  benchcmd->add_option("--dim", bo.model_dim)->check(CLI::PositiveNumber);
  benchcmd->add_flag("--no-control", no_control, "Skip the canonical-attention control");
  benchcmd->add_option("--seed", bo.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitConfig);
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*mask) return cmd_mask(ma);
    if (*train) {
      ta.threads = app.get_option("--threads")->count() > 0 ? threads : 0;
      return cmd_train(ta);
    }
    if (*impute) {
      ia.threads = threads;
      return cmd_impute(ia);
    }
    if (*eval) return cmd_eval(ea);
    if (*spectrum) return cmd_spectrum(spec_in, spec_out);
    if (*benchcmd) {
      bo.control = !no_control;
      return cmd_bench(bo, attention);
    }
  } catch (const training::TrainingAborted& e) {
    return fail("numeric_abort", e.what(), kExitNumeric, {{"step", e.step}});
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), kExitNumeric);
  } catch (const ContractError& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const DimensionError& e) {
    return fail("dimension", e.what(), kExitConfig);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), kExitConfig);
  } catch (const json::exception& e) {
    return fail("config", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
