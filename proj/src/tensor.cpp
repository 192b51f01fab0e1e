#include "byteprobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "byteprobe/errors.hpp"
#include "byteprobe/parallel.hpp"

namespace byteprobe {

namespace {

using detail::TensorNode;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// Above this many multiply-accumulates a convolution pass is split across
// worker threads.  Each output (or input-gradient) element is owned by one
// thread, so results do not depend on the thread count.
constexpr std::size_t kParallelMacs = 4u << 20;

// y[p] += a * x[p].  restrict lets the compiler vectorize across p.
inline void axpy(double* __restrict y, const double* __restrict x, double a,
                 std::size_t n) {
  for (std::size_t p = 0; p < n; ++p) y[p] += a * x[p];
}

// Dot product in four fixed-order accumulator lanes: the summation order is
// deterministic (just a different fixed order than a serial loop) and the
// independent lanes break the FMA latency chain.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  double tail = 0.0;
  for (; p < n; ++p) tail += a[p] * b[p];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

}  // namespace

Tensor wrap_node(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

Tensor Tensor::make(std::vector<std::size_t> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(shape_product(n->shape), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return make(std::move(shape), requires_grad);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto t = make(std::move(shape), requires_grad);
  t.node()->value = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item: tensor " + shape_str(shape()) + " is not scalar");
  }
  return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || !node_->grad_ready) {
    throw StateError("grad: no gradient recorded; run backward() on a loss first");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) return;
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad_ready = false;
}

namespace {

// Builds the result node for an op.  Parents and the backprop closure are
// only attached when some parent needs a gradient; pure inference carries no
// graph at all.
Tensor op_result(std::vector<std::size_t> shape,
                 std::vector<std::shared_ptr<TensorNode>> parents,
                 std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(shape_product(n->shape), 0.0);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return wrap_node(std::move(n));
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride) {
  if (input.rank() != 2 || kernels.rank() != 3 || bias.rank() != 1) {
    throw DimensionError("conv1d: expected input [c_in x L], kernels [c_out x c_in x w], "
                         "bias [c_out]; got " + shape_str(input.shape()) + ", " +
                         shape_str(kernels.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::size_t c_in = input.dim(0), len = input.dim(1);
  const std::size_t c_out = kernels.dim(0), kc = kernels.dim(1), w = kernels.dim(2);
  if (kc != c_in) {
    throw DimensionError("conv1d: kernel channel axis " + std::to_string(kc) +
                         " != input channel axis " + std::to_string(c_in));
  }
  if (bias.dim(0) != c_out) {
    throw DimensionError("conv1d: bias axis " + std::to_string(bias.dim(0)) +
                         " != filter axis " + std::to_string(c_out));
  }
  if (stride < 1) throw DimensionError("conv1d: stride must be >= 1");
  if (len < w) {
    throw DimensionError("conv1d: input length " + std::to_string(len) +
                         " < kernel width " + std::to_string(w));
  }
  const std::size_t l_out = (len - w) / stride + 1;

  auto in_node = input.node();
  auto k_node = kernels.node();
  auto b_node = bias.node();

  Tensor out = op_result(
      {c_out, l_out}, {in_node, k_node, b_node},
      [in_node, k_node, b_node, c_in, len, c_out, w, l_out, stride](TensorNode& self) {
        const double* gy = self.grad.data();
        const std::size_t macs = c_out * c_in * w * l_out;
        if (in_node->requires_grad) {
          in_node->ensure_grad();
          double* gx = in_node->grad.data();
          const double* kv = k_node->value.data();
          parallel_for(c_in, macs > kParallelMacs ? 1 : c_in, [&](std::size_t cb, std::size_t ce) {
            for (std::size_t c = cb; c < ce; ++c) {
              double* gx_row = gx + c * len;
              for (std::size_t f = 0; f < c_out; ++f) {
                const double* gy_row = gy + f * l_out;
                const double* k_row = kv + (f * c_in + c) * w;
                for (std::size_t k = 0; k < w; ++k) {
                  const double kf = k_row[k];
                  if (stride == 1) {
                    axpy(gx_row + k, gy_row, kf, l_out);
                  } else {
                    for (std::size_t p = 0; p < l_out; ++p) gx_row[p * stride + k] += kf * gy_row[p];
                  }
                }
              }
            }
          });
        }
        if (k_node->requires_grad || b_node->requires_grad) {
          k_node->ensure_grad();
          b_node->ensure_grad();
          double* gk = k_node->grad.data();
          double* gb = b_node->grad.data();
          const double* xv = in_node->value.data();
          const bool want_k = k_node->requires_grad;
          const bool want_b = b_node->requires_grad;
          parallel_for(c_out, macs > kParallelMacs ? 1 : c_out, [&](std::size_t fb, std::size_t fe) {
            for (std::size_t f = fb; f < fe; ++f) {
              const double* gy_row = gy + f * l_out;
              if (want_b) {
                double s = 0.0;
                for (std::size_t p = 0; p < l_out; ++p) s += gy_row[p];
                gb[f] += s;
              }
              if (!want_k) continue;
              for (std::size_t c = 0; c < c_in; ++c) {
                const double* x_row = xv + c * len;
                double* gk_row = gk + (f * c_in + c) * w;
                for (std::size_t k = 0; k < w; ++k) {
                  double s;
                  if (stride == 1) {
                    s = dot(gy_row, x_row + k, l_out);
                  } else {
                    s = 0.0;
                    for (std::size_t p = 0; p < l_out; ++p) s += gy_row[p] * x_row[p * stride + k];
                  }
                  gk_row[k] += s;
                }
              }
            }
          });
        }
      });

  double* yv = out.data().data();
  const double* xv = input.data().data();
  const double* kv = kernels.data().data();
  const double* bv = bias.data().data();
  const std::size_t macs = c_out * c_in * w * l_out;
  parallel_for(c_out, macs > kParallelMacs ? 1 : c_out, [&](std::size_t fb, std::size_t fe) {
    for (std::size_t f = fb; f < fe; ++f) {
      double* y_row = yv + f * l_out;
      for (std::size_t p = 0; p < l_out; ++p) y_row[p] = bv[f];
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* x_row = xv + c * len;
        const double* k_row = kv + (f * c_in + c) * w;
        for (std::size_t k = 0; k < w; ++k) {
          const double kf = k_row[k];
          if (stride == 1) {
            axpy(y_row, x_row + k, kf, l_out);
          } else {
            for (std::size_t p = 0; p < l_out; ++p) y_row[p] += kf * x_row[p * stride + k];
          }
        }
      }
    }
  });
  return out;
}

PoolResult maxpool1d(const Tensor& input, std::size_t width, std::size_t stride) {
  if (input.rank() != 2) {
    throw DimensionError("maxpool1d: expected [c x L], got " + shape_str(input.shape()));
  }
  if (width < 1 || stride < 1) throw DimensionError("maxpool1d: width and stride must be >= 1");
  const std::size_t c = input.dim(0), len = input.dim(1);
  if (width > len) {
    throw DimensionError("maxpool1d: width " + std::to_string(width) +
                         " > input length " + std::to_string(len));
  }
  const std::size_t l_out = (len - width) / stride + 1;

  auto argmax = std::make_shared<std::vector<std::size_t>>(c * l_out, 0);
  auto in_node = input.node();
  Tensor out = op_result({c, l_out}, {in_node}, [in_node, argmax, c, l_out, len](TensorNode& self) {
    if (!in_node->requires_grad) return;
    in_node->ensure_grad();
    for (std::size_t i = 0; i < c * l_out; ++i) {
      const std::size_t ch = i / l_out;
      in_node->grad[ch * len + (*argmax)[i]] += self.grad[i];
    }
  });

  const double* xv = input.data().data();
  double* yv = out.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* x_row = xv + ch * len;
    for (std::size_t p = 0; p < l_out; ++p) {
      const std::size_t start = p * stride;
      double best = x_row[start];
      std::size_t best_i = start;
      for (std::size_t k = 1; k < width; ++k) {
        if (x_row[start + k] > best) {
          best = x_row[start + k];
          best_i = start + k;
        }
      }
      yv[ch * l_out + p] = best;
      (*argmax)[ch * l_out + p] = best_i;
    }
  }
  return {out, *argmax};
}

Tensor embedding_lookup(const std::vector<int>& symbols, const Tensor& table) {
  if (table.rank() != 2) {
    throw DimensionError("embedding_lookup: table must be [vocab x d], got " +
                         shape_str(table.shape()));
  }
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  const std::size_t len = symbols.size();
  for (std::size_t j = 0; j < len; ++j) {
    if (symbols[j] < 0 || static_cast<std::size_t>(symbols[j]) >= vocab) {
      throw InputError("embedding_lookup: symbol " + std::to_string(symbols[j]) +
                       " at offset " + std::to_string(j) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }

  auto t_node = table.node();
  auto syms = std::make_shared<std::vector<int>>(symbols);
  Tensor out = op_result({d, len}, {t_node}, [t_node, syms, d, len](TensorNode& self) {
    if (!t_node->requires_grad) return;
    t_node->ensure_grad();
    for (std::size_t j = 0; j < len; ++j) {
      double* row = t_node->grad.data() + static_cast<std::size_t>((*syms)[j]) * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += self.grad[k * len + j];
    }
  });

  const double* tv = table.data().data();
  double* yv = out.data().data();
  for (std::size_t j = 0; j < len; ++j) {
    const double* row = tv + static_cast<std::size_t>(symbols[j]) * d;
    for (std::size_t k = 0; k < d; ++k) yv[k * len + j] = row[k];
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1 || weights.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("dense: expected input [n], weights [m x n], bias [m]; got " +
                         shape_str(input.shape()) + ", " + shape_str(weights.shape()) +
                         ", " + shape_str(bias.shape()));
  }
  const std::size_t n = input.dim(0), m = weights.dim(0);
  if (weights.dim(1) != n || bias.dim(0) != m) {
    throw DimensionError("dense: weights " + shape_str(weights.shape()) +
                         " incompatible with input [" + std::to_string(n) +
                         "] / bias " + shape_str(bias.shape()));
  }
  auto x_node = input.node();
  auto w_node = weights.node();
  auto b_node = bias.node();
  Tensor out = op_result({m}, {x_node, w_node, b_node}, [x_node, w_node, b_node, n, m](TensorNode& self) {
    const double* gy = self.grad.data();
    if (x_node->requires_grad) {
      x_node->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = gy[i];
        const double* w_row = w_node->value.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) x_node->grad[j] += g * w_row[j];
      }
    }
    if (w_node->requires_grad) {
      w_node->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = gy[i];
        double* gw_row = w_node->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gw_row[j] += g * x_node->value[j];
      }
    }
    if (b_node->requires_grad) {
      b_node->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) b_node->grad[i] += gy[i];
    }
  });
  for (std::size_t i = 0; i < m; ++i) {
    const double* w_row = weights.data().data() + i * n;
    double acc = bias.data()[i];
    for (std::size_t j = 0; j < n; ++j) acc += w_row[j] * input.data()[j];
    out.data()[i] = acc;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  auto x_node = x.node();
  Tensor out = op_result(x.shape(), {x_node}, [x_node](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) {
      if (x_node->value[i] > 0.0) x_node->grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return out;
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  auto x_node = x.node();
  auto out_node = std::make_shared<std::vector<double>>();  // forward values for backprop
  Tensor out = op_result(x.shape(), {x_node}, [x_node, out_node](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) {
      const double y = (*out_node)[i];
      x_node->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
  out_node->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = stable_sigmoid(x.data()[i]);
    out.data()[i] = y;
    (*out_node)[i] = y;
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw InputError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (!training || rate == 0.0) return x;  // identity, same tensor
  auto factors = std::make_shared<std::vector<double>>(x.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*factors)[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  }
  auto x_node = x.node();
  Tensor out = op_result(x.shape(), {x_node}, [x_node, factors](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) x_node->grad[i] += self.grad[i] * (*factors)[i];
  });
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * (*factors)[i];
  return out;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_product(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  auto x_node = x.node();
  Tensor out = op_result(std::move(shape), {x_node}, [x_node](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) x_node->grad[i] += self.grad[i];
  });
  out.data() = x.data();
  return out;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto a_node = a.node(), b_node = b.node();
  Tensor out = op_result(a.shape(), {a_node, b_node}, [a_node, b_node](TensorNode& self) {
    for (auto* p : {a_node.get(), b_node.get()}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto a_node = a.node(), b_node = b.node();
  Tensor out = op_result(a.shape(), {a_node, b_node}, [a_node, b_node](TensorNode& self) {
    if (a_node->requires_grad) {
      a_node->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) a_node->grad[i] += self.grad[i] * b_node->value[i];
    }
    if (b_node->requires_grad) {
      b_node->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) b_node->grad[i] += self.grad[i] * a_node->value[i];
    }
  });
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Tensor scale(const Tensor& x, double s) {
  auto x_node = x.node();
  Tensor out = op_result(x.shape(), {x_node}, [x_node, s](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) x_node->grad[i] += self.grad[i] * s;
  });
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * s;
  return out;
}

Tensor sum(const Tensor& x) {
  auto x_node = x.node();
  Tensor out = op_result({1}, {x_node}, [x_node](TensorNode& self) {
    if (!x_node->requires_grad) return;
    x_node->ensure_grad();
    for (double& g : x_node->grad) g += self.grad[0];
  });
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.data()[0] = acc;
  return out;
}

Tensor bce_with_logits(const Tensor& logit, double label) {
  if (logit.size() != 1) {
    throw DimensionError("bce_with_logits: logit must be scalar, got " +
                         shape_str(logit.shape()));
  }
  auto z_node = logit.node();
  Tensor out = op_result({1}, {z_node}, [z_node, label](TensorNode& self) {
    if (!z_node->requires_grad) return;
    z_node->ensure_grad();
    z_node->grad[0] += self.grad[0] * (stable_sigmoid(z_node->value[0]) - label);
  });
  const double z = logit.data()[0];
  out.data()[0] = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  // Iterative post-order DFS: children are processed before parents when the
  // ordering is reversed.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    n->ensure_grad();
    n->grad_ready = true;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace byteprobe
