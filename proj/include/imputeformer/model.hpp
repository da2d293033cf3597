#pragma once

// The imputation network: input embedding, L blocks of temporal projected
// attention and spatial embedded attention, and an MLP readout.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imputeformer/data.hpp"
#include "imputeformer/tensor.hpp"

namespace imputeformer::model {

enum class BlockOrder { temporal_first, spatial_first };

struct ModelConfig {
  std::size_t n_nodes = 32;
  std::size_t window = 24;              // T
  std::size_t input_hidden = 16;        // D
  std::size_t node_embed_total = 96;    // D_s, split into T heads of D_s/T
  std::size_t node_embed_key_dim = 16;  // D_emb
  std::size_t model_dim = 64;           // D'
  std::size_t projected_dim = 6;        // C
  std::size_t n_layers = 3;
  std::size_t ffn_hidden = 128;
  std::size_t n_heads = 1;
  std::size_t steps_per_day = 24;
  double layer_norm_eps = 1e-5;
  BlockOrder order = BlockOrder::temporal_first;

  void validate() const;
  std::size_t node_embed_per_step() const { return node_embed_total / window; }
  std::size_t head_dim() const { return model_dim / n_heads; }

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are a ContractError.
  static ModelConfig from_json(const nlohmann::json& j);
};

// Ordered, named parameter set. Names look like "layer0.temporal.in_q".
class ModelParams {
 public:
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  const Tensor& operator[](const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.contains(name); }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  std::size_t count() const;  // total scalar parameters

  void add(std::string name, Tensor value);
  // Copy whose tensors are gradient-tracking leaves on `tape`.
  ModelParams bind(Tape& tape) const;
  // Copy with plain (untracked) tensors.
  ModelParams detach() const;
  // Checks names and shapes against what `cfg` requires.
  void check(const ModelConfig& cfg) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Attention factors captured during a forward pass (values only).
struct LayerTrace {
  std::vector<Tensor> inflow;   // per head, [N,C,T]: softmax over T
  std::vector<Tensor> outflow;  // per head, [N,T,C]: softmax over C
  Tensor spatial_query;         // [N,D_emb], rows sum to 1
  Tensor spatial_key;           // [N,D_emb], columns sum to 1

  // outflow * inflow for one node and head: the implied T x T attention.
  Eigen::MatrixXd temporal_matrix(std::size_t node, std::size_t head = 0) const;
  // spatial_query * spatial_key^T: the implied N x N attention.
  Eigen::MatrixXd spatial_matrix() const;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
};

struct ForwardOptions {
  bool ablate_temporal = false;  // temporal attention output := its input
  ForwardTrace* trace = nullptr;
};

// Time-of-day index of every step in a window starting at `start_step`.
std::vector<std::size_t> time_of_day(const ModelConfig& cfg, std::int64_t start_step, std::size_t length);

// [N,T,D + 2 + D_s/T] features before the input projection:
// MLP(x) | sin | cos | node embedding head for step t.
Tensor input_features(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
                      std::span<const std::size_t> tod);
Tensor input_embed(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
                   std::span<const std::size_t> tod);

// Attention cores without the residual/norm/FFN wrap.
Tensor temporal_attention(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                          LayerTrace* trace = nullptr);
Tensor spatial_attention(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                         LayerTrace* trace = nullptr);

// Full encoder blocks: attention, residual, norm, FFN, residual, norm.
Tensor temporal_block(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                      const ForwardOptions& opts = {});
Tensor spatial_block(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                     const ForwardOptions& opts = {});

// [N,T] output for every cell. x must be zero outside input_mask.
Tensor forward(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
               std::int64_t start_step, const ForwardOptions& opts = {});
Tensor forward(const ModelConfig& cfg, const ModelParams& p, const data::Window& w, const ForwardOptions& opts = {});

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  nlohmann::json metadata = nlohmann::json::object();  // stored next to the config
  std::vector<std::pair<std::string, Tensor>> extras;   // e.g. normalization stats
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace imputeformer::model
