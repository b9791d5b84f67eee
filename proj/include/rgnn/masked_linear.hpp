#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "rgnn/autodiff.hpp"

namespace rgnn {

/// A weight matrix W [out x in] with a binary connectivity mask B and an
/// optional bias. W is kept at exactly 0.0 wherever B is 0.
struct MaskedLinear {
  std::string name;
  Var weight;
  Var bias;  // undefined for bias-free layers
  Tensor mask;
  bool sparsity_target = false;  // eligible for ER masking and rewiring

  std::size_t in_features() const { return weight.value().cols(); }
  std::size_t out_features() const { return weight.value().rows(); }
  bool has_bias() const { return bias.defined(); }

  std::size_t active_connections() const {
    std::size_t n = 0;
    for (double b : mask.values()) n += b != 0.0;
    return n;
  }

  /// Installs `new_mask` and zeroes W at every masked position.
  void set_mask(Tensor new_mask) {
    require_same_shape(weight.value(), new_mask, "MaskedLinear::set_mask");
    mask = std::move(new_mask);
    Tensor& w = weight.value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (mask[i] == 0.0) w[i] = 0.0;
    }
  }
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) initialisation for W and bias, all-ones mask.
inline MaskedLinear make_masked_linear(std::string name, std::size_t in, std::size_t out, bool with_bias,
                                       Rng& rng, bool sparsity_target = false) {
  const double bound = in > 0 ? 1.0 / std::sqrt(static_cast<double>(in)) : 0.0;
  std::uniform_real_distribution<double> unif(-bound, bound);
  Tensor w = Tensor::zeros(out, in);
  for (double& v : w.values()) v = unif(rng);
  MaskedLinear layer;
  layer.name = std::move(name);
  layer.weight = parameter(std::move(w));
  if (with_bias) {
    Tensor b({out});
    for (double& v : b.values()) v = unif(rng);
    layer.bias = parameter(std::move(b));
  }
  layer.mask = Tensor::filled(out, in, 1.0);
  layer.sparsity_target = sparsity_target;
  return layer;
}

inline Var masked_linear_forward(const Var& x, const MaskedLinear& layer) {
  return masked_matmul(x, layer.weight, layer.mask, layer.bias);
}

/// Zeroes the weight gradient wherever the mask is 0 so masked weights never move.
inline void apply_grad_mask(MaskedLinear& layer) {
  Tensor& g = layer.weight.grad();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (layer.mask[i] == 0.0) g[i] = 0.0;
  }
}

}  // namespace rgnn
