#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rgnn/autodiff.hpp"

namespace rgnn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

inline AdamState make_adam_state(const std::vector<Var>& params, AdamConfig config = {}) {
  AdamState state;
  state.config = config;
  for (const Var& p : params) {
    state.m.emplace_back(p.value().shape());
    state.v.emplace_back(p.value().shape());
  }
  return state;
}

/// One bias-corrected Adam update of every parameter from its current grad.
inline void adam_step(std::span<Var> params, AdamState& state) {
  if (params.size() != state.m.size()) throw std::invalid_argument("adam_step: state/parameter count mismatch");
  ++state.t;
  const AdamConfig& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k].value();
    const Tensor& g = params[k].grad();
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    require_same_shape(w, m, "adam_step");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config = {})
      : params_(std::move(params)), state_(make_adam_state(params_, config)) {}

  void step() { adam_step(params_, state_); }

  void zero_grad() {
    for (Var& p : params_) p.zero_grad();
  }

  /// Clears both moment buffers at the given flat positions of `param`.
  void reset_entries(const Var& param, std::span<const std::size_t> flat_positions) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (params_[k] == param) {
        for (std::size_t i : flat_positions) {
          state_.m[k][i] = 0.0;
          state_.v[k][i] = 0.0;
        }
        return;
      }
    }
    throw std::invalid_argument("Adam::reset_entries: parameter not managed by this optimizer");
  }

  const AdamState& state() const { return state_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  AdamState state_;
};

}  // namespace rgnn
