#pragma once

// Reverse-mode differentiation over rank-2 tensors. Every op records its
// parents and a closure that pushes the node's gradient into them; backward()
// walks the recorded graph once in reverse topological order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "rgnn/random.hpp"
#include "rgnn/tensor.hpp"

namespace rgnn {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    return grad;
  }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

}  // namespace detail

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad_buffer(); }
  Tensor& grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  void zero_grad() { node_->grad_buffer().fill(0.0); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  friend bool operator==(const Var& a, const Var& b) { return a.node_ == b.node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Trainable leaf; its gradient accumulates across backward() calls until zeroed.
inline Var parameter(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->grad = Tensor(node->value.shape());
  return Var(std::move(node));
}

inline Var constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

using Index = std::shared_ptr<const std::vector<std::size_t>>;

inline Index make_index(std::vector<std::size_t> idx) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
}

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const Var& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

}  // namespace detail

/// Populates the gradient of every requires_grad leaf reachable from `loss`.
/// The recorded graph is released afterwards; a second call on the same loss
/// is an error.
inline void backward(const Var& loss) {
  if (!loss.defined()) throw std::logic_error("backward: undefined loss");
  auto root = loss.node();
  if (root->value.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + root->value.shape_string());
  }
  if (root->consumed) {
    throw std::logic_error("backward: graph already consumed; run the forward pass again");
  }
  root->consumed = true;
  if (!root->requires_grad || !root->backward_fn) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && parent->backward_fn && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    node->grad_buffer();
    node->backward_fn(*node);
  }
  for (detail::Node* node : order) {
    node->parents.clear();
    node->backward_fn = nullptr;
    if (node != root.get()) node->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

/// y = x * (W .* B)^T + bias. `bias` may be undefined.
inline Var masked_matmul(const Var& x, const Var& weight, const Tensor& mask, const Var& bias) {
  const Tensor& w = weight.value();
  require_same_shape(w, mask, "masked_matmul(weight, mask)");
  if (x.cols() != w.cols()) {
    throw DimensionError("masked_matmul: input has " + std::to_string(x.cols()) +
                         " features, layer expects " + std::to_string(w.cols()));
  }
  if (bias.defined() && bias.value().size() != w.rows()) {
    throw DimensionError("masked_matmul: bias length " + std::to_string(bias.value().size()) +
                         " != output dim " + std::to_string(w.rows()));
  }
  auto effective = std::make_shared<Tensor>(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) (*effective)[i] = w[i] * mask[i];

  Tensor y = Tensor::zeros(x.rows(), w.rows());
  if (y.size() > 0 && w.cols() > 0) {
    detail::as_matrix(y).noalias() =
        detail::as_matrix(x.value()) * detail::as_matrix(*effective).transpose();
  }
  if (bias.defined()) {
    const Tensor& b = bias.value();
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b[c];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_op(std::move(y), inputs, [effective](detail::Node& self) {
    const Tensor& dy = self.grad;
    detail::Node& xin = *self.parents[0];
    detail::Node& win = *self.parents[1];
    if (dy.rows() == 0) return;
    if (xin.requires_grad && effective->cols() > 0) {
      detail::as_matrix(xin.grad_buffer()).noalias() +=
          detail::as_matrix(dy) * detail::as_matrix(*effective);
    }
    if (win.requires_grad && effective->cols() > 0) {
      detail::as_matrix(win.grad_buffer()).noalias() +=
          detail::as_matrix(dy).transpose() * detail::as_matrix(xin.value);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Tensor& db = self.parents[2]->grad_buffer();
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += dy(r, c);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return detail::make_op(std::move(y), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var relu(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return detail::make_op(std::move(y), {x}, [](detail::Node& self) {
    detail::Node& in = *self.parents[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

/// y = (1 + eta) * x with eta a learnable 1x1 scalar.
inline Var scale_one_plus(const Var& x, const Var& eta) {
  if (eta.value().size() != 1) throw DimensionError("scale_one_plus: eta must be a scalar");
  const double factor = 1.0 + eta.value()[0];
  Tensor y = x.value();
  for (double& v : y.values()) v *= factor;
  return detail::make_op(std::move(y), {x, eta}, [factor](detail::Node& self) {
    detail::Node& xin = *self.parents[0];
    detail::Node& ein = *self.parents[1];
    if (xin.requires_grad) {
      Tensor& g = xin.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    }
    if (ein.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xin.value[i];
      ein.grad_buffer()[0] += acc;
    }
  });
}

/// Row i of the result is row idx[i] of x.
inline Var gather_rows(const Var& x, const Index& idx) {
  const std::size_t cols = x.cols();
  const std::size_t src_rows = x.rows();
  Tensor y = Tensor::zeros(idx->size(), cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::size_t r = (*idx)[i];
    if (r >= src_rows) throw DimensionError("gather_rows: index " + std::to_string(r) + " out of range");
    std::copy_n(x.value().data().begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                y.data().begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return detail::make_op(std::move(y), {x}, [idx, cols](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::size_t r = (*idx)[i];
      for (std::size_t c = 0; c < cols; ++c) g(r, c) += self.grad(i, c);
    }
  });
}

/// out[idx[i]] += x[i]; result has `out_rows` rows.
inline Var scatter_add_rows(const Var& x, const Index& idx, std::size_t out_rows) {
  if (idx->size() != x.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(idx->size()) + " indices for " +
                         std::to_string(x.rows()) + " rows");
  }
  const std::size_t cols = x.cols();
  Tensor y = Tensor::zeros(out_rows, cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::size_t r = (*idx)[i];
    if (r >= out_rows) throw DimensionError("scatter_add_rows: index " + std::to_string(r) + " out of range");
    for (std::size_t c = 0; c < cols; ++c) y(r, c) += x.value()(i, c);
  }
  return detail::make_op(std::move(y), {x}, [idx, cols](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::size_t r = (*idx)[i];
      for (std::size_t c = 0; c < cols; ++c) g(i, c) += self.grad(r, c);
    }
  });
}

/// Multiplies row r of x by the constant coef[r].
inline Var scale_rows(const Var& x, std::shared_ptr<const std::vector<double>> coef) {
  if (coef->size() != x.rows()) throw DimensionError("scale_rows: coefficient count mismatch");
  const std::size_t cols = x.cols();
  Tensor y = x.value();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) y(r, c) *= (*coef)[r];
  return detail::make_op(std::move(y), {x}, [coef, cols](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < self.grad.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) g(r, c) += (*coef)[r] * self.grad(r, c);
  });
}

inline Var sum(const Var& x) {
  return detail::make_op(Tensor::scalar(x.value().sum()), {x}, [](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double d = self.grad[0];
    for (double& v : g.values()) v += d;
  });
}

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over the row (batch) dimension, per feature column.
/// Training mode normalizes with batch statistics and updates the running
/// estimates; evaluation mode uses the running estimates.
inline Var batch_norm_1d(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                         Tensor& running_var, bool train, BatchNormOptions opt = {}) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (n == 0) throw DimensionError("batch_norm_1d: batch size 0");
  if (gamma.value().size() != f || beta.value().size() != f || running_mean.size() != f ||
      running_var.size() != f) {
    throw DimensionError("batch_norm_1d: parameter length does not match feature count " +
                         std::to_string(f));
  }
  std::vector<double> mean(f, 0.0), inv_std(f, 0.0);
  const Tensor& xv = x.value();
  if (train) {
    std::vector<double> var(f, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) mean[c] += xv(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = xv(r, c) - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < f; ++c) {
      const double biased = var[c] / static_cast<double>(n);
      const double unbiased = n > 1 ? var[c] / static_cast<double>(n - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + opt.eps);
      running_mean[c] = (1.0 - opt.momentum) * running_mean[c] + opt.momentum * mean[c];
      running_var[c] = (1.0 - opt.momentum) * running_var[c] + opt.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + opt.eps);
    }
  }
  auto xhat = std::make_shared<Tensor>(xv.shape());
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      const double h = (xv(r, c) - mean[c]) * inv_std[c];
      (*xhat)(r, c) = h;
      y(r, c) = gamma.value()[c] * h + beta.value()[c];
    }
  return detail::make_op(std::move(y), {x, gamma, beta}, [xhat, inv_std = std::move(inv_std), train, n, f](
                                                            detail::Node& self) {
    const Tensor& dy = self.grad;
    detail::Node& xin = *self.parents[0];
    detail::Node& gin = *self.parents[1];
    detail::Node& bin = *self.parents[2];
    std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        sum_dy[c] += dy(r, c);
        sum_dy_xhat[c] += dy(r, c) * (*xhat)(r, c);
      }
    if (gin.requires_grad) {
      Tensor& g = gin.grad_buffer();
      for (std::size_t c = 0; c < f; ++c) g[c] += sum_dy_xhat[c];
    }
    if (bin.requires_grad) {
      Tensor& g = bin.grad_buffer();
      for (std::size_t c = 0; c < f; ++c) g[c] += sum_dy[c];
    }
    if (!xin.requires_grad) return;
    Tensor& gx = xin.grad_buffer();
    const Tensor& gamma_v = gin.value;
    const double nn = static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        if (train) {
          gx(r, c) += gamma_v[c] * inv_std[c] / nn *
                      (nn * dy(r, c) - sum_dy[c] - (*xhat)(r, c) * sum_dy_xhat[c]);
        } else {
          gx(r, c) += gamma_v[c] * inv_std[c] * dy(r, c);
        }
      }
  });
}

/// Mean over the batch of -log softmax(logits)[label].
inline Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& labels) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (n == 0) throw DimensionError("softmax_cross_entropy: batch size 0");
  if (labels.size() != n) throw DimensionError("softmax_cross_entropy: label count mismatch");
  auto probs = std::make_shared<Tensor>(logits.value().shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= k) throw DimensionError("softmax_cross_entropy: label out of range");
    double mx = logits.value()(r, 0);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits.value()(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits.value()(r, c) - mx);
    for (std::size_t c = 0; c < k; ++c) (*probs)(r, c) = std::exp(logits.value()(r, c) - mx) / z;
    loss += std::log(z) + mx - logits.value()(r, labels[r]);
  }
  loss /= static_cast<double>(n);
  return detail::make_op(Tensor::scalar(loss), {logits}, [probs, labels, n, k](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double scale = self.grad[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) {
        const double target = c == labels[r] ? 1.0 : 0.0;
        g(r, c) += scale * ((*probs)(r, c) - target);
      }
  });
}

/// Inverted dropout; identity outside training mode.
inline Var dropout(const Var& x, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1]");
  if (x.rows() == 0) throw DimensionError("dropout: batch size 0");
  if (!train || rate == 0.0) return x;
  auto keep = std::make_shared<Tensor>(x.value().shape());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double scale = rate < 1.0 ? 1.0 / (1.0 - rate) : 0.0;
  for (double& k : keep->values()) k = unif(rng) >= rate ? scale : 0.0;
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*keep)[i];
  return detail::make_op(std::move(y), {x}, [keep](detail::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*keep)[i] * self.grad[i];
  });
}

}  // namespace rgnn
