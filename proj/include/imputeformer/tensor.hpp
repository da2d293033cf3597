#pragma once

// Dense row-major tensors of doubles with define-by-run reverse-mode
// differentiation. A Tape records every operation whose inputs require a
// gradient; Tape::backward replays the record in reverse.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "imputeformer/errors.hpp"

namespace imputeformer {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tape;

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  Tape* tape = nullptr;
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t extent(int axis) const;

  std::span<const double> data() const { return node_->data; }
  // Mutation is only meaningful for constants and leaves before they are used.
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  Tape* tape() const { return node_->tape; }

  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  // 2-D view (requires dim() == 2).
  Eigen::Map<const RowMatrix> matrix() const;
  Eigen::MatrixXd to_matrix() const;
  Eigen::MatrixXd grad_matrix() const;

  // Detached copy that does not track gradients.
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;

  friend class Tape;
  friend Tensor record_op(Shape, std::vector<double>, std::initializer_list<Tensor>,
                          std::function<void(const TensorNode&)>);
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A gradient-tracking leaf owned by this tape.
  Tensor leaf(Shape shape, std::vector<double> data);
  Tensor leaf(const Tensor& value);

  // Fills grads of every reachable tracked tensor with dLoss/dTensor.
  void backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  struct Op {
    std::shared_ptr<TensorNode> output;
    std::function<void(const TensorNode&)> backward;
  };
  std::vector<Op> ops_;
  std::vector<std::shared_ptr<TensorNode>> leaves_;

  friend Tensor record_op(Shape, std::vector<double>, std::initializer_list<Tensor>,
                          std::function<void(const TensorNode&)>);
};

// Builds the output of an operation. When any input tracks gradients the
// result is tracked too and `backward` (which receives the output node,
// including its grad) is appended to the shared tape.
Tensor record_op(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                 std::function<void(const TensorNode&)> backward);

// Adds `delta` into the grad buffer of `t` when it is tracked.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

// --- linear algebra -------------------------------------------------------

// [..,m,k] x [..,k,n]; leading batch dims must match or one side is 2-D.
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
// x W + b over the last axis of x.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Adds a vector over the last axis.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);
// Divides every element by a scalar tensor.
Tensor div_scalar(const Tensor& a, const Tensor& s);
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
// tanh approximation.
Tensor gelu(const Tensor& a);
Tensor sqrt(const Tensor& a);

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);

// --- reductions and normalizations ----------------------------------------

Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);
// Mean over one axis; the axis is removed.
Tensor mean_axis(const Tensor& a, int axis);
Tensor softmax(const Tensor& a, int axis);
// Normalizes over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

}  // namespace imputeformer
