#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgnn/layers.hpp"

namespace rgnn {

/// epsilon is the fraction of connections removed: each mask entry is kept
/// with probability 1 - epsilon, so epsilon = 0 is the dense model.
struct SparsityConfig {
  double epsilon = 0.0;
  bool mask_all = false;  // also mask embedding MLPs and the readout head

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw std::invalid_argument("SparsityConfig: epsilon must be in [0, 1]");
    }
  }
};

inline Tensor make_er_mask(std::size_t rows, std::size_t cols, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("make_er_mask: epsilon must be in [0, 1]");
  const double keep = 1.0 - epsilon;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor mask = Tensor::zeros(rows, cols);
  for (double& b : mask.values()) b = unif(rng) < keep ? 1.0 : 0.0;
  return mask;
}

/// Installs a fresh ER mask on every target layer (in model order) and zeroes
/// the masked weights. Biases are untouched.
inline void apply_sparsity(GnnModel& model, const SparsityConfig& config, Rng& rng) {
  config.validate();
  for (MaskedLinear* layer : model.linear_layers()) {
    if (!layer->sparsity_target && !config.mask_all) continue;
    layer->set_mask(make_er_mask(layer->out_features(), layer->in_features(), config.epsilon, rng));
  }
}

struct LayerParamCount {
  std::string name;
  bool sparsity_target = false;
  std::size_t total = 0;   // weight entries
  std::size_t active = 0;  // unmasked weight entries
  std::size_t masked = 0;
  std::size_t bias = 0;
};

struct ParamReport {
  std::vector<LayerParamCount> layers;
  std::size_t other = 0;  // batch-norm affine parameters and eta scalars
  std::size_t total = 0;
  std::size_t active = 0;
  std::size_t target_total = 0;   // weights of sparsity-target layers
  std::size_t target_active = 0;
};

inline ParamReport count_params(const GnnModel& model) {
  ParamReport r;
  for (const MaskedLinear* l : model.linear_layers()) {
    LayerParamCount c;
    c.name = l->name;
    c.sparsity_target = l->sparsity_target;
    c.total = l->weight.value().size();
    c.active = l->active_connections();
    c.masked = c.total - c.active;
    c.bias = l->has_bias() ? l->bias.value().size() : 0;
    r.total += c.total + c.bias;
    r.active += c.active + c.bias;
    if (c.sparsity_target) {
      r.target_total += c.total;
      r.target_active += c.active;
    }
    r.layers.push_back(std::move(c));
  }
  for (const GcnBlock& b : model.gcn_blocks) r.other += b.norm.gamma.value().size() + b.norm.beta.value().size();
  for (const GinBlock& b : model.gin_blocks)
    r.other += b.eta.value().size() + b.norm.gamma.value().size() + b.norm.beta.value().size();
  r.total += r.other;
  r.active += r.other;
  return r;
}

}  // namespace rgnn
