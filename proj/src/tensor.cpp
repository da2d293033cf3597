#include "imputeformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace imputeformer {

namespace {

using MapC = Eigen::Map<const RowMatrix>;
using MapM = Eigen::Map<RowMatrix>;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const auto r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class F, class G>
Tensor unary(const Tensor& a, F&& forward, G&& derivative) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
  return record_op(a.shape(), std::move(out), {a}, [a, derivative](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    const auto& x = a.node()->data;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * derivative(x[i], o.data[i]);
  });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<TensorNode>()) { node_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<TensorNode>()) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  MapM(data.data(), m.rows(), m.cols()) = m;
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(data));
}

std::size_t Tensor::extent(int axis) const { return shape()[normalize_axis(axis, dim(), "extent")]; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  if (dim() != 2) throw DimensionError("matrix: expected 2-D tensor, got " + shape_string(shape()));
  return MapC(node_->data.data(), static_cast<Eigen::Index>(shape()[0]), static_cast<Eigen::Index>(shape()[1]));
}

Eigen::MatrixXd Tensor::to_matrix() const { return matrix(); }

Eigen::MatrixXd Tensor::grad_matrix() const {
  if (dim() != 2) throw DimensionError("grad_matrix: expected 2-D tensor, got " + shape_string(shape()));
  if (!has_grad()) return Eigen::MatrixXd::Zero(shape()[0], shape()[1]);
  return MapC(node_->grad.data(), static_cast<Eigen::Index>(shape()[0]), static_cast<Eigen::Index>(shape()[1]));
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

// --- Tape -----------------------------------------------------------------

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.size(), 0.0);
  t.node_->tape = this;
  leaves_.push_back(t.node_);
  return t;
}

Tensor Tape::leaf(const Tensor& value) { return leaf(value.shape(), std::vector<double>(value.data().begin(), value.data().end())); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  if (ops_.empty()) throw ContractError("backward: tape is empty");
  if (!loss.requires_grad() || loss.tape() != this) throw ContractError("backward: loss was not recorded on this tape");
  loss.node()->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward(*it->output);
}

Tensor record_op(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                 std::function<void(const TensorNode&)> backward) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) continue;
    if (tape != nullptr && in.tape() != tape) throw ContractError("operation mixes tensors from different tapes");
    tape = in.tape();
  }
  Tensor out(std::move(shape), std::move(data));
  if (tape != nullptr) {
    out.node_->requires_grad = true;
    out.node_->grad.assign(out.size(), 0.0);
    out.node_->tape = tape;
    tape->ops_.push_back({out.node_, std::move(backward)});
  }
  return out;
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
  if (!t.requires_grad()) return;
  auto& g = t.node()->grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) {
    throw DimensionError("matmul: operands must be at least 2-D, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[a.dim() - 2], k = a.shape()[a.dim() - 1];
  const std::size_t k2 = b.shape()[b.dim() - 2], n = b.shape()[b.dim() - 1];
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  if (k != k2 || (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), Nn = static_cast<Eigen::Index>(n);

  if (batch_b.empty()) {
    // Stack all rows of a into one product.
    const auto rows = static_cast<Eigen::Index>(a.size() / k);
    Shape shape = batch_a;
    shape.push_back(m);
    shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(rows * Nn));
    MapM(out.data(), rows, Nn).noalias() = MapC(a.data().data(), rows, K) * MapC(b.data().data(), K, Nn);
    return record_op(std::move(shape), std::move(out), {a, b}, [a, b, rows, K, Nn](const TensorNode& o) {
      MapC dc(o.grad.data(), rows, Nn);
      if (a.requires_grad())
        MapM(a.node()->grad.data(), rows, K).noalias() += dc * MapC(b.data().data(), K, Nn).transpose();
      if (b.requires_grad())
        MapM(b.node()->grad.data(), K, Nn).noalias() += MapC(a.data().data(), rows, K).transpose() * dc;
    });
  }

  const Shape& batch = batch_a.empty() ? batch_b : batch_a;
  const std::size_t nb = shape_size(batch);
  const bool a_batched = !batch_a.empty();
  Shape shape = batch;
  shape.push_back(m);
  shape.push_back(n);
  std::vector<double> out(nb * m * n);
  for (std::size_t i = 0; i < nb; ++i) {
    const double* pa = a.data().data() + (a_batched ? i * m * k : 0);
    const double* pb = b.data().data() + i * k * n;
    MapM(out.data() + i * m * n, M, Nn).noalias() = MapC(pa, M, K) * MapC(pb, K, Nn);
  }
  return record_op(std::move(shape), std::move(out), {a, b}, [a, b, nb, a_batched, M, K, Nn](const TensorNode& o) {
    const auto mk = static_cast<std::size_t>(M * K), kn = static_cast<std::size_t>(K * Nn),
               mn = static_cast<std::size_t>(M * Nn);
    for (std::size_t i = 0; i < nb; ++i) {
      MapC dc(o.grad.data() + i * mn, M, Nn);
      const std::size_t ao = a_batched ? i * mk : 0;
      if (a.requires_grad())
        MapM(a.node()->grad.data() + ao, M, K).noalias() += dc * MapC(b.data().data() + i * kn, K, Nn).transpose();
      if (b.requires_grad())
        MapM(b.node()->grad.data() + i * kn, K, Nn).noalias() += MapC(a.data().data() + ao, M, K).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.dim() < 2) throw DimensionError("transpose: expected at least 2-D, got " + shape_string(a.shape()));
  const std::size_t m = a.shape()[a.dim() - 2], n = a.shape()[a.dim() - 1];
  const std::size_t nb = a.size() / (m * n);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(a.size());
  const auto M = static_cast<Eigen::Index>(m), Nn = static_cast<Eigen::Index>(n);
  for (std::size_t i = 0; i < nb; ++i)
    MapM(out.data() + i * m * n, Nn, M) = MapC(a.data().data() + i * m * n, M, Nn).transpose();
  return record_op(std::move(shape), std::move(out), {a}, [a, nb, M, Nn](const TensorNode& o) {
    if (!a.requires_grad()) return;
    const auto mn = static_cast<std::size_t>(M * Nn);
    for (std::size_t i = 0; i < nb; ++i)
      MapM(a.node()->grad.data() + i * mn, M, Nn) += MapC(o.grad.data() + i * mn, Nn, M).transpose();
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add_bias(matmul(x, weight), bias); }

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return record_op(a.shape(), std::move(out), {a, b}, [a, b](const TensorNode& o) {
    accumulate_grad(a, o.grad);
    accumulate_grad(b, o.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record_op(a.shape(), std::move(out), {a, b}, [a, b](const TensorNode& o) {
    accumulate_grad(a, o.grad);
    if (b.requires_grad()) {
      auto& g = b.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return record_op(a.shape(), std::move(out), {a, b}, [a, b](const TensorNode& o) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * a[i];
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.dim() == 0 || bias.dim() != 1 || bias.size() != a.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match last axis of " +
                         shape_string(a.shape()));
  }
  const std::size_t n = bias.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < out.size(); r += n)
    for (std::size_t j = 0; j < n; ++j) out[r + j] += b[j];
  return record_op(a.shape(), std::move(out), {a, bias}, [a, bias, n](const TensorNode& o) {
    accumulate_grad(a, o.grad);
    if (bias.requires_grad()) {
      auto& g = bias.node()->grad;
      for (std::size_t r = 0; r < o.grad.size(); r += n)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[r + j];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return record_op(a.shape(), std::move(out), {a}, [a, factor](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("div_scalar: divisor must be scalar, got " + shape_string(s.shape()));
  const double d = s[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / d;
  return record_op(a.shape(), std::move(out), {a, s}, [a, s, d](const TensorNode& o) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / d;
    }
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * a[i];
      s.node()->grad[0] -= acc / (d * d);
    }
  });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  // tanh is kept from the forward pass; it dominates the cost otherwise.
  const auto x = a.data();
  std::vector<double> out(x.size());
  auto th = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::tanh(c * (x[i] + k * x[i] * x[i] * x[i]));
    (*th)[i] = t;
    out[i] = 0.5 * x[i] * (1.0 + t);
  }
  return record_op(a.shape(), std::move(out), {a}, [a, th](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    const auto& xs = a.node()->data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = (*th)[i], v = xs[i];
      g[i] += o.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v));
    }
  });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  return record_op(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                   [a](const TensorNode& o) { accumulate_grad(a, o.grad); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].dim(), "concat");
  Shape ref = parts[0].shape();
  ref[ax] = 0;
  std::size_t total_length = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() == ref.size()) probe[ax] = 0;
    if (probe != ref) {
      throw DimensionError("concat: shape mismatch " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    total_length += p.shape()[ax];
  }
  Shape shape = parts[0].shape();
  shape[ax] = total_length;
  const AxisSplit total = split_axis(shape, ax);
  std::vector<double> out(shape_size(shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t chunk = p.shape()[ax] * total.inner;
    offsets.push_back(offset);
    for (std::size_t o = 0; o < total.outer; ++o)
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total.length * total.inner + offset));
    offset += chunk;
  }
  auto backward = [parts, offsets, total, ax](const TensorNode& o) {
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const auto& p = parts[pi];
      if (!p.requires_grad()) continue;
      const std::size_t chunk = p.shape()[ax] * total.inner;
      auto& g = p.node()->grad;
      for (std::size_t oo = 0; oo < total.outer; ++oo) {
        const double* src = o.grad.data() + oo * total.length * total.inner + offsets[pi];
        double* dst = g.data() + oo * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  };
  // record_op only needs one tracked input to find the tape.
  Tensor anchor = parts[0];
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.requires_grad()) continue;
    if (tape != nullptr && p.tape() != tape) throw ContractError("concat mixes tensors from different tapes");
    tape = p.tape();
    anchor = p;
  }
  return record_op(std::move(shape), std::move(out), {anchor}, std::move(backward));
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "slice");
  if (begin > end || end > a.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_string(a.shape()));
  }
  const AxisSplit s = split_axis(a.shape(), ax);
  Shape shape = a.shape();
  shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(s.outer * chunk);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o * s.length * s.inner + begin * s.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  return record_op(std::move(shape), std::move(out), {a}, [a, s, chunk, begin](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      double* dst = g.data() + oo * s.length * s.inner + begin * s.inner;
      const double* src = o.grad.data() + oo * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

// --- reductions -----------------------------------------------------------

Tensor reduce_sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return record_op({}, {acc}, {a}, [a](const TensorNode& o) {
    if (!a.requires_grad()) return;
    for (auto& g : a.node()->grad) g += o.grad[0];
  });
}

Tensor reduce_mean(const Tensor& a) { return scale(reduce_sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean_axis(const Tensor& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "mean_axis");
  const AxisSplit s = split_axis(a.shape(), ax);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double inv = 1.0 / static_cast<double>(s.length);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.length; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += a[(o * s.length + j) * s.inner + i] * inv;
  return record_op(std::move(shape), std::move(out), {a}, [a, s, inv](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    for (std::size_t oo = 0; oo < s.outer; ++oo)
      for (std::size_t j = 0; j < s.length; ++j)
        for (std::size_t i = 0; i < s.inner; ++i) g[(oo * s.length + j) * s.inner + i] += o.grad[oo * s.inner + i] * inv;
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "softmax");
  const AxisSplit s = split_axis(a.shape(), ax);
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.length * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.length; ++j) mx = std::max(mx, x[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.length; ++j) {
        const double e = std::exp(x[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.length; ++j) out[base + j * s.inner] /= total;
    }
  }
  return record_op(a.shape(), std::move(out), {a}, [a, s](const TensorNode& o) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad;
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = oo * s.length * s.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.length; ++j) dot += o.grad[base + j * s.inner] * o.data[base + j * s.inner];
        for (std::size_t j = 0; j < s.length; ++j) {
          const std::size_t idx = base + j * s.inner;
          g[idx] += o.data[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  if (x.dim() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gain.dim() != 1 || gain.size() != n || bias.dim() != 1 || bias.size() != n) {
    throw DimensionError("layer_norm: affine parameters " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xr[i] - mean) * is;
      (*xhat)[r * n + i] = h;
      out[r * n + i] = h * gain[i] + bias[i];
    }
  }
  Tensor xr = x;
  return record_op(x.shape(), std::move(out), {x, gain, bias}, [xr, gain, bias, xhat, inv_std, n, rows](const TensorNode& o) {
    std::vector<double> dh(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = o.grad.data() + r * n;
      const double* h = xhat->data() + r * n;
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dh[i] = dy[i] * gain[i];
        sum_dh += dh[i];
        sum_dh_h += dh[i] * h[i];
      }
      if (gain.requires_grad())
        for (std::size_t i = 0; i < n; ++i) gain.node()->grad[i] += dy[i] * h[i];
      if (bias.requires_grad())
        for (std::size_t i = 0; i < n; ++i) bias.node()->grad[i] += dy[i];
      if (xr.requires_grad()) {
        const double is = (*inv_std)[r] / static_cast<double>(n);
        double* g = xr.node()->grad.data() + r * n;
        for (std::size_t i = 0; i < n; ++i)
          g[i] += is * (static_cast<double>(n) * dh[i] - sum_dh - h[i] * sum_dh_h);
      }
    }
  });
}

}  // namespace imputeformer
