#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "byteprobe/rng.hpp"

namespace byteprobe {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  bool grad_ready = false;  // set by backward(); guards grad() access
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major f64 tensor with reverse-mode autodiff.  The graph is
// rebuilt on every forward pass; a recorded graph belongs to one thread.
// Everything is 64-bit float by design.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->value.size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Gradient of the last backward() pass; throws StateError before that.
  const std::vector<double>& grad() const;
  bool has_grad() const { return node_ && node_->grad_ready; }
  void zero_grad();

  std::shared_ptr<detail::TensorNode>& node() { return node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  static Tensor make(std::vector<std::size_t> shape, bool requires_grad);
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor wrap_node(std::shared_ptr<detail::TensorNode> n);
};

// A named trainable tensor; names are unique within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

struct PoolResult {
  Tensor output;
  // argmax[c * L_out + p] = input position (in [0, L)) that won the window.
  std::vector<std::size_t> argmax;
};

// input [c_in x L], kernels [c_out x c_in x w], bias [c_out] -> [c_out x L_out]
// with L_out = (L - w) / stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride);

// input [c x L] -> output [c x L_out]; ties break to the lowest index so the
// recorded argmax (and everything derived from it) is deterministic.
PoolResult maxpool1d(const Tensor& input, std::size_t width, std::size_t stride);

// symbols in [0, vocab) index rows of table [vocab x d]; output is [d x L]
// with column j equal to table row symbols[j].
Tensor embedding_lookup(const std::vector<int>& symbols, const Tensor& table);

// input [n], weights [m x n], bias [m] -> [m]
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Inverted dropout: survivors are scaled by 1/(1-rate) during training and
// inference is exactly the identity (the input tensor is returned as-is).
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor sum(const Tensor& x);

// Numerically stable binary cross-entropy on a scalar logit, label in {0,1}.
Tensor bce_with_logits(const Tensor& logit, double label);

// Reverse-mode sweep from a scalar loss; gradients accumulate into every
// reachable node with requires_grad set (call zero_grad between batches).
void backward(const Tensor& loss);

}  // namespace byteprobe
