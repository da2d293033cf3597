#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "imputeformer/errors.hpp"
#include "imputeformer/model.hpp"

namespace imputeformer::bench {
namespace {

using model::ModelConfig;
using model::ModelParams;

template <class F>
double median_ms(std::size_t reps, F&& fn) {
  fn();  // warm-up
  std::vector<double> ms;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
  return ms[ms.size() / 2];
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = g(rng);
  return Tensor(std::move(shape), std::move(v));
}

// softmax(Q K^T / sqrt(d)) V with the full score matrix per node.
Tensor canonical_temporal(const ModelParams& p, const Tensor& z) {
  const Tensor q = matmul(z, p["layer0.temporal.in_q"]);
  const Tensor k = matmul(z, p["layer0.temporal.in_k"]);
  const Tensor v = matmul(z, p["layer0.temporal.in_v"]);
  const double s = 1.0 / std::sqrt(static_cast<double>(z.shape().back()));
  return matmul(softmax(scale(matmul(q, transpose(k)), s), -1), v);
}

// Node-to-node scores from the same embeddings, materialized as N x N.
Tensor canonical_spatial(const ModelConfig& cfg, const ModelParams& p, const Tensor& z) {
  const std::size_t n = cfg.n_nodes, t = cfg.window;
  const Tensor e = mean_axis(reshape(p["embed.node"], {n, t, cfg.node_embed_per_step()}), 1);
  const Tensor q = linear(e, p["layer0.spatial.query.w"], p["layer0.spatial.query.b"]);
  const Tensor k = linear(e, p["layer0.spatial.key.w"], p["layer0.spatial.key.b"]);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.node_embed_key_dim));
  const Tensor a = softmax(scale(matmul(q, transpose(k)), s), -1);
  return reshape(matmul(a, reshape(z, {n, t * cfg.model_dim})), z.shape());
}

}  // namespace

Attention parse_attention(const std::string& name) {
  if (name == "temporal") return Attention::temporal;
  if (name == "spatial") return Attention::spatial;
  throw ContractError("unknown attention '" + name + "' (expected temporal or spatial)");
}

std::vector<BenchRow> run(const BenchOptions& opts) {
  if (opts.sizes.empty() || opts.reps == 0) throw ContractError("bench: need at least one size and one repetition");
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(opts.seed);
  for (const std::size_t size : opts.sizes) {
    ModelConfig cfg;
    const bool temporal = opts.attention == Attention::temporal;
    cfg.n_nodes = temporal ? opts.other_extent : size;
    cfg.window = temporal ? size : opts.other_extent;
    cfg.node_embed_total = 4 * cfg.window;
    cfg.node_embed_key_dim = opts.embed_key_dim;
    cfg.model_dim = opts.model_dim;
    cfg.projected_dim = opts.projected_dim;
    cfg.input_hidden = 8;
    cfg.n_layers = 1;
    cfg.ffn_hidden = opts.model_dim;
    cfg.validate();
    const ModelParams p = ModelParams::init(cfg, opts.seed);
    const Tensor z = random_tensor({cfg.n_nodes, cfg.window, cfg.model_dim}, rng);

    BenchRow row;
    row.size = size;
    row.factorized_ms = median_ms(opts.reps, [&] {
      return temporal ? model::temporal_attention(cfg, p, 0, z) : model::spatial_attention(cfg, p, 0, z);
    });
    row.canonical_ms = std::numeric_limits<double>::quiet_NaN();
    if (opts.control) {
      row.canonical_ms =
          median_ms(opts.reps, [&] { return temporal ? canonical_temporal(p, z) : canonical_spatial(cfg, p, z); });
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace imputeformer::bench
