#include "imputeformer/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace imputeformer::model {

namespace {

std::string layer_prefix(std::size_t l, const char* kind) { return "layer" + std::to_string(l) + "." + kind + "."; }

Tensor feed_forward(const ModelParams& p, const std::string& pre, const Tensor& z) {
  const Tensor h = gelu(linear(z, p[pre + "ffn1.w"], p[pre + "ffn1.b"]));
  return linear(h, p[pre + "ffn2.w"], p[pre + "ffn2.b"]);
}

// Residual + norm around the attention output, then the same around the FFN.
Tensor encoder_wrap(const ModelConfig& cfg, const ModelParams& p, const std::string& pre, const Tensor& z,
                    const Tensor& attended) {
  const double eps = cfg.layer_norm_eps;
  const Tensor h = layer_norm(add(z, attended), p[pre + "ln1.g"], p[pre + "ln1.b"], eps);
  return layer_norm(add(h, feed_forward(p, pre, h)), p[pre + "ln2.g"], p[pre + "ln2.b"], eps);
}

struct ParamSpec {
  std::string name;
  Shape shape;
  enum class Init { glorot, zeros, ones, normal } init;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  using I = ParamSpec::Init;
  const std::size_t D = c.input_hidden, Dm = c.model_dim, F = c.ffn_hidden;
  std::vector<ParamSpec> s{
      {"embed.mlp1.w", {1, D}, I::glorot},
      {"embed.mlp1.b", {D}, I::zeros},
      {"embed.mlp2.w", {D, D}, I::glorot},
      {"embed.mlp2.b", {D}, I::zeros},
      {"embed.node", {c.n_nodes, c.node_embed_total}, I::normal},
      {"embed.proj.w", {D + 2 + c.node_embed_per_step(), Dm}, I::glorot},
      {"embed.proj.b", {Dm}, I::zeros},
  };
  auto wrap = [&](const std::string& pre) {
    s.push_back({pre + "ln1.g", {Dm}, I::ones});
    s.push_back({pre + "ln1.b", {Dm}, I::zeros});
    s.push_back({pre + "ffn1.w", {Dm, F}, I::glorot});
    s.push_back({pre + "ffn1.b", {F}, I::zeros});
    s.push_back({pre + "ffn2.w", {F, Dm}, I::glorot});
    s.push_back({pre + "ffn2.b", {Dm}, I::zeros});
    s.push_back({pre + "ln2.g", {Dm}, I::ones});
    s.push_back({pre + "ln2.b", {Dm}, I::zeros});
  };
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto t = layer_prefix(l, "temporal");
    s.push_back({t + "projector", {c.n_heads * c.projected_dim, Dm}, I::normal});
    for (const char* w : {"in_q", "in_k", "in_v", "out_q", "out_k", "out_v"}) s.push_back({t + w, {Dm, Dm}, I::glorot});
    wrap(t);
    const auto sp = layer_prefix(l, "spatial");
    s.push_back({sp + "query.w", {c.node_embed_per_step(), c.node_embed_key_dim}, I::glorot});
    s.push_back({sp + "query.b", {c.node_embed_key_dim}, I::zeros});
    s.push_back({sp + "key.w", {c.node_embed_per_step(), c.node_embed_key_dim}, I::glorot});
    s.push_back({sp + "key.b", {c.node_embed_key_dim}, I::zeros});
    wrap(sp);
  }
  s.push_back({"readout.fc1.w", {Dm, F}, I::glorot});
  s.push_back({"readout.fc1.b", {F}, I::zeros});
  s.push_back({"readout.fc2.w", {F, 1}, I::glorot});
  s.push_back({"readout.fc2.b", {1}, I::zeros});
  return s;
}

const char* order_name(BlockOrder o) { return o == BlockOrder::temporal_first ? "temporal_first" : "spatial_first"; }

}  // namespace

// --- config ------------------------------------------------------------------

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v < 1) throw ContractError(std::string("model config: ") + what + " must be >= 1");
  };
  positive(n_nodes, "n_nodes");
  positive(window, "window");
  positive(input_hidden, "input_hidden");
  positive(node_embed_total, "node_embed_total");
  positive(node_embed_key_dim, "node_embed_key_dim");
  positive(model_dim, "model_dim");
  positive(projected_dim, "projected_dim");
  positive(n_layers, "n_layers");
  positive(ffn_hidden, "ffn_hidden");
  positive(n_heads, "n_heads");
  positive(steps_per_day, "steps_per_day");
  if (projected_dim >= window)
    throw ContractError("model config: projected_dim (" + std::to_string(projected_dim) + ") must be < window (" +
                        std::to_string(window) + ")");
  if (node_embed_key_dim >= model_dim) throw ContractError("model config: node_embed_key_dim must be < model_dim");
  if (node_embed_total % window != 0)
    throw ContractError("model config: node_embed_total (" + std::to_string(node_embed_total) +
                        ") must be divisible by window (" + std::to_string(window) + ")");
  if (model_dim % n_heads != 0) throw ContractError("model config: model_dim must be divisible by n_heads");
  if (!(layer_norm_eps > 0.0)) throw ContractError("model config: layer_norm_eps must be > 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_nodes", n_nodes},
          {"window", window},
          {"input_hidden", input_hidden},
          {"node_embed_total", node_embed_total},
          {"node_embed_key_dim", node_embed_key_dim},
          {"model_dim", model_dim},
          {"projected_dim", projected_dim},
          {"n_layers", n_layers},
          {"ffn_hidden", ffn_hidden},
          {"n_heads", n_heads},
          {"steps_per_day", steps_per_day},
          {"layer_norm_eps", layer_norm_eps},
          {"order", order_name(order)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("model config must be a JSON object");
  ModelConfig c;
  const std::map<std::string, std::size_t*> dims{
      {"n_nodes", &c.n_nodes},         {"window", &c.window},
      {"input_hidden", &c.input_hidden}, {"node_embed_total", &c.node_embed_total},
      {"node_embed_key_dim", &c.node_embed_key_dim}, {"model_dim", &c.model_dim},
      {"projected_dim", &c.projected_dim}, {"n_layers", &c.n_layers},
      {"ffn_hidden", &c.ffn_hidden},   {"n_heads", &c.n_heads},
      {"steps_per_day", &c.steps_per_day}};
  for (const auto& [key, value] : j.items()) {
    if (auto it = dims.find(key); it != dims.end()) {
      if (!value.is_number_integer() || value.get<long long>() < 1)
        throw ContractError("model config: '" + key + "' must be a positive integer");
      *it->second = value.get<std::size_t>();
    } else if (key == "layer_norm_eps") {
      if (!value.is_number()) throw ContractError("model config: 'layer_norm_eps' must be a number");
      c.layer_norm_eps = value.get<double>();
    } else if (key == "order") {
      const auto s = value.is_string() ? value.get<std::string>() : std::string();
      if (s == "temporal_first") c.order = BlockOrder::temporal_first;
      else if (s == "spatial_first") c.order = BlockOrder::spatial_first;
      else throw ContractError("model config: 'order' must be \"temporal_first\" or \"spatial_first\"");
    } else {
      throw ContractError("model config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

// --- parameters ----------------------------------------------------------------

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  ModelParams p;
  for (const auto& spec : param_specs(cfg)) {
    std::vector<double> v(shape_size(spec.shape), 0.0);
    switch (spec.init) {
      case ParamSpec::Init::glorot: {
        const double fan_in = static_cast<double>(spec.shape[0]), fan_out = static_cast<double>(spec.shape[1]);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& x : v) x = bound * u(rng);
        break;
      }
      case ParamSpec::Init::normal:
        for (auto& x : v) x = normal(rng);
        break;
      case ParamSpec::Init::ones:
        std::fill(v.begin(), v.end(), 1.0);
        break;
      case ParamSpec::Init::zeros:
        break;
    }
    p.add(spec.name, Tensor(spec.shape, std::move(v)));
  }
  return p;
}

const Tensor& ModelParams::operator[](const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model params: no parameter named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ModelParams::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model params: no parameter named '" + name + "'");
  return entries_[it->second].second;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ModelParams::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("model params: duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

ModelParams ModelParams::bind(Tape& tape) const {
  ModelParams out;
  for (const auto& [name, t] : entries_) out.add(name, tape.leaf(t));
  return out;
}

ModelParams ModelParams::detach() const {
  ModelParams out;
  for (const auto& [name, t] : entries_) out.add(name, t.detach());
  return out;
}

void ModelParams::check(const ModelConfig& cfg) const {
  const auto specs = param_specs(cfg);
  if (specs.size() != entries_.size())
    throw ContractError("model params: expected " + std::to_string(specs.size()) + " tensors, got " +
                        std::to_string(entries_.size()));
  for (const auto& spec : specs) {
    const Tensor& t = (*this)[spec.name];
    if (t.shape() != spec.shape)
      throw DimensionError("model params: '" + spec.name + "' has shape " + shape_string(t.shape()) + ", expected " +
                           shape_string(spec.shape));
    for (double v : t.data())
      if (!std::isfinite(v)) throw NumericError("model params: '" + spec.name + "' contains non-finite values");
  }
}

// --- trace -------------------------------------------------------------------

Eigen::MatrixXd LayerTrace::temporal_matrix(std::size_t node, std::size_t head) const {
  const Tensor& in = inflow.at(head);
  const Tensor& out = outflow.at(head);
  const auto C = static_cast<Eigen::Index>(in.shape()[1]), T = static_cast<Eigen::Index>(in.shape()[2]);
  Eigen::Map<const RowMatrix> a(out.data().data() + node * T * C, T, C);
  Eigen::Map<const RowMatrix> b(in.data().data() + node * C * T, C, T);
  return a * b;
}

Eigen::MatrixXd LayerTrace::spatial_matrix() const {
  return spatial_query.to_matrix() * spatial_key.to_matrix().transpose();
}

// --- forward -----------------------------------------------------------------

std::vector<std::size_t> time_of_day(const ModelConfig& cfg, std::int64_t start_step, std::size_t length) {
  const auto period = static_cast<std::int64_t>(cfg.steps_per_day);
  std::vector<std::size_t> tod(length);
  for (std::size_t t = 0; t < length; ++t) {
    const std::int64_t s = (start_step + static_cast<std::int64_t>(t)) % period;
    tod[t] = static_cast<std::size_t>(s < 0 ? s + period : s);
  }
  return tod;
}

Tensor input_features(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
                      std::span<const std::size_t> tod) {
  const std::size_t N = cfg.n_nodes, T = cfg.window;
  if (x.shape() != Shape{N, T})
    throw DimensionError("input_embed: expected x of shape " + shape_string({N, T}) + ", got " + shape_string(x.shape()));
  if (static_cast<std::size_t>(input_mask.rows()) != N || static_cast<std::size_t>(input_mask.cols()) != T)
    throw DimensionError("input_embed: mask shape does not match x");
  if (tod.size() != T) throw DimensionError("input_embed: need one time-of-day index per step");
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t t = 0; t < T; ++t)
      if (!input_mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) && x[i * T + t] != 0.0)
        throw ContractError("input_embed: x must be zero outside the input mask");

  const Tensor h = reshape(x, {N, T, 1});
  const Tensor mlp = linear(gelu(linear(h, p["embed.mlp1.w"], p["embed.mlp1.b"])), p["embed.mlp2.w"], p["embed.mlp2.b"]);

  std::vector<double> time(N * T * 2);
  for (std::size_t t = 0; t < T; ++t) {
    if (tod[t] >= cfg.steps_per_day)
      throw ContractError("input_embed: time-of-day index " + std::to_string(tod[t]) + " outside [0, " +
                          std::to_string(cfg.steps_per_day) + ")");
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(tod[t]) / static_cast<double>(cfg.steps_per_day);
    for (std::size_t i = 0; i < N; ++i) {
      time[(i * T + t) * 2] = std::sin(angle);
      time[(i * T + t) * 2 + 1] = std::cos(angle);
    }
  }
  const Tensor nodes = reshape(p["embed.node"], {N, T, cfg.node_embed_per_step()});
  return concat({mlp, Tensor({N, T, 2}, std::move(time)), nodes}, 2);
}

Tensor input_embed(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
                   std::span<const std::size_t> tod) {
  return linear(input_features(cfg, p, x, input_mask, tod), p["embed.proj.w"], p["embed.proj.b"]);
}

Tensor temporal_attention(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                          LayerTrace* trace) {
  const auto pre = layer_prefix(layer, "temporal");
  const std::size_t H = cfg.n_heads, C = cfg.projected_dim, dh = cfg.head_dim();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& P = p[pre + "projector"];

  const Tensor k_in = matmul(z, p[pre + "in_k"]);
  const Tensor v_in = matmul(z, p[pre + "in_v"]);
  const Tensor q_out = matmul(z, p[pre + "out_q"]);

  // Inflow: the projector rows query the whole window.
  std::vector<Tensor> heads;
  std::vector<Tensor> inflow(H);
  for (std::size_t h = 0; h < H; ++h) {
    const Tensor Ph = slice(P, 0, h * C, (h + 1) * C);
    const Tensor q = slice(matmul(Ph, p[pre + "in_q"]), 1, h * dh, (h + 1) * dh);
    const Tensor k = slice(k_in, 2, h * dh, (h + 1) * dh);
    inflow[h] = softmax(scale(matmul(q, transpose(k)), inv_scale), -1);  // [N,C,T]
    heads.push_back(matmul(inflow[h], slice(v_in, 2, h * dh, (h + 1) * dh)));
  }
  const Tensor projected = H == 1 ? heads[0] : concat(heads, 2);  // [N,C,D']

  // Outflow: every step reads from the C projected summaries.
  const Tensor v_out = matmul(projected, p[pre + "out_v"]);
  heads.clear();
  std::vector<Tensor> outflow(H);
  for (std::size_t h = 0; h < H; ++h) {
    const Tensor Ph = slice(P, 0, h * C, (h + 1) * C);
    const Tensor k = slice(matmul(Ph, p[pre + "out_k"]), 1, h * dh, (h + 1) * dh);
    const Tensor q = slice(q_out, 2, h * dh, (h + 1) * dh);
    outflow[h] = softmax(scale(matmul(q, transpose(k)), inv_scale), -1);  // [N,T,C]
    heads.push_back(matmul(outflow[h], slice(v_out, 2, h * dh, (h + 1) * dh)));
  }
  if (trace != nullptr) {
    for (std::size_t h = 0; h < H; ++h) {
      trace->inflow.push_back(inflow[h].detach());
      trace->outflow.push_back(outflow[h].detach());
    }
  }
  return H == 1 ? heads[0] : concat(heads, 2);
}

Tensor spatial_attention(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                         LayerTrace* trace) {
  const auto pre = layer_prefix(layer, "spatial");
  const std::size_t N = cfg.n_nodes, T = z.shape()[1], Dm = cfg.model_dim;
  // Node identities: the per-step embedding heads averaged over the window.
  const Tensor e = mean_axis(reshape(p["embed.node"], {N, cfg.window, cfg.node_embed_per_step()}), 1);
  auto frobenius_normalized = [](const Tensor& m) { return div_scalar(m, sqrt(reduce_sum(mul(m, m)))); };
  const Tensor q = frobenius_normalized(linear(e, p[pre + "query.w"], p[pre + "query.b"]));
  const Tensor k = frobenius_normalized(linear(e, p[pre + "key.w"], p[pre + "key.b"]));
  const Tensor sq = softmax(q, 1);  // rows stochastic
  const Tensor sk = softmax(k, 0);  // columns stochastic
  if (trace != nullptr) {
    trace->spatial_query = sq.detach();
    trace->spatial_key = sk.detach();
  }
  // sq (sk^T Z): never forms the N x N matrix.
  const Tensor flat = reshape(z, {N, T * Dm});
  return reshape(matmul(sq, matmul(transpose(sk), flat)), {N, T, Dm});
}

Tensor temporal_block(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                      const ForwardOptions& opts) {
  LayerTrace* trace = opts.trace != nullptr ? &opts.trace->layers.at(layer) : nullptr;
  const Tensor attended = opts.ablate_temporal ? z : temporal_attention(cfg, p, layer, z, trace);
  return encoder_wrap(cfg, p, layer_prefix(layer, "temporal"), z, attended);
}

Tensor spatial_block(const ModelConfig& cfg, const ModelParams& p, std::size_t layer, const Tensor& z,
                     const ForwardOptions& opts) {
  LayerTrace* trace = opts.trace != nullptr ? &opts.trace->layers.at(layer) : nullptr;
  return encoder_wrap(cfg, p, layer_prefix(layer, "spatial"), z, spatial_attention(cfg, p, layer, z, trace));
}

Tensor forward(const ModelConfig& cfg, const ModelParams& p, const Tensor& x, const data::Mask& input_mask,
               std::int64_t start_step, const ForwardOptions& opts) {
  const auto tod = time_of_day(cfg, start_step, cfg.window);
  if (opts.trace != nullptr) opts.trace->layers.assign(cfg.n_layers, {});
  Tensor z = input_embed(cfg, p, x, input_mask, tod);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    if (cfg.order == BlockOrder::temporal_first) {
      z = spatial_block(cfg, p, l, temporal_block(cfg, p, l, z, opts), opts);
    } else {
      z = temporal_block(cfg, p, l, spatial_block(cfg, p, l, z, opts), opts);
    }
  }
  const Tensor h = gelu(linear(z, p["readout.fc1.w"], p["readout.fc1.b"]));
  return reshape(linear(h, p["readout.fc2.w"], p["readout.fc2.b"]), {cfg.n_nodes, cfg.window});
}

Tensor forward(const ModelConfig& cfg, const ModelParams& p, const data::Window& w, const ForwardOptions& opts) {
  return forward(cfg, p, Tensor::from_matrix(w.x), w.input(), w.start_step, opts);
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'I', 'M', 'P', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_le<std::uint64_t>(out, s.size());
  out += s;
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_string(out, name);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str() {
    const auto n = le<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const auto nd = le<std::uint32_t>();
    if (nd > 8) throw ParseError("checkpoint: tensor '" + name + "' has implausible rank " + std::to_string(nd));
    Shape shape(nd);
    for (auto& d : shape) d = le<std::uint64_t>();
    const std::size_t n = shape_size(shape);
    need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(le<std::uint64_t>());
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, ckpt.seed);
  put_le(out, ckpt.step);
  const nlohmann::json header{{"model", ckpt.config.to_json()}, {"metadata", ckpt.metadata}};
  put_string(out, header.dump());
  put_le<std::uint64_t>(out, ckpt.params.entries().size());
  for (const auto& [name, t] : ckpt.params.entries()) put_tensor(out, name, t);
  put_le<std::uint64_t>(out, ckpt.extras.size());
  for (const auto& [name, t] : ckpt.extras) put_tensor(out, name, t);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: bad magic, not a checkpoint file");
  const std::string body = bytes.substr(sizeof(kMagic));
  Reader r(body);
  Checkpoint c;
  if (const auto v = r.le<std::uint32_t>(); v != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(v));
  c.seed = r.le<std::uint64_t>();
  c.step = r.le<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad config record: ") + e.what());
  }
  c.config = ModelConfig::from_json(header.at("model"));
  c.metadata = header.value("metadata", nlohmann::json::object());
  const auto n_params = r.le<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    auto [name, t] = r.tensor();
    c.params.add(std::move(name), std::move(t));
  }
  const auto n_extras = r.le<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_extras; ++i) c.extras.push_back(r.tensor());
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  c.params.check(c.config);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  const auto bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace imputeformer::model
