#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgnn/layers.hpp"

namespace rgnn {

struct Position {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const Position&, const Position&) = default;
};

struct Connection {
  std::string layer;
  std::size_t row = 0;
  std::size_t col = 0;
  double weight = 0.0;
};

struct RewireEvent {
  std::size_t epoch = 0;
  std::string layer;
  double zeta = 0.0;
  std::vector<Position> removed;
  std::vector<Position> added;
  double mu = 0.0;
  double sigma = 0.0;
  std::size_t active = 0;  // |C| before and after the event
};

/// Active connections ordered by ascending |w|, ties by (row, col).
inline std::vector<Connection> rank_connections(const MaskedLinear& layer) {
  const Tensor& w = layer.weight.value();
  const std::size_t cols = w.cols();
  std::vector<Connection> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (layer.mask[i] != 0.0) out.push_back({layer.name, i / cols, i % cols, w[i]});
  }
  std::stable_sort(out.begin(), out.end(), [](const Connection& a, const Connection& b) {
    return std::abs(a.weight) < std::abs(b.weight);
  });
  return out;
}

/// floor(zeta * active); the small offset keeps e.g. 0.29 * 100 from flooring to 28.
inline std::size_t rewire_count(double zeta, std::size_t active) {
  const auto n = static_cast<std::size_t>(std::floor(zeta * static_cast<double>(active) + 1e-9));
  return std::min(n, active);
}

/// Prunes the floor(zeta * |C|) smallest-magnitude connections and regrows as
/// many at uniformly random inactive positions, drawing the new weights from
/// Normal(mu, sigma^2) fitted to the surviving weights. Positions pruned in this
/// event are only eligible when no other inactive position is left.
inline RewireEvent fixed_rewire_step(MaskedLinear& layer, double zeta, Rng& rng) {
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("fixed_rewire_step: zeta must be in [0, 1]");
  Tensor& w = layer.weight.value();
  Tensor& mask = layer.mask;
  const std::size_t cols = w.cols();

  RewireEvent ev;
  ev.layer = layer.name;
  ev.zeta = zeta;
  const std::vector<Connection> ranked = rank_connections(layer);
  ev.active = ranked.size();
  const std::size_t n = rewire_count(zeta, ranked.size());

  std::vector<std::size_t> inactive;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == 0.0) inactive.push_back(i);

  std::vector<std::size_t> removed_flat;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t flat = ranked[k].row * cols + ranked[k].col;
    mask[flat] = 0.0;
    w[flat] = 0.0;
    removed_flat.push_back(flat);
    ev.removed.push_back({ranked[k].row, ranked[k].col});
  }
  if (n == 0) return ev;

  double sum = 0.0, sq = 0.0;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (mask[i] != 0.0) {
      sum += w[i];
      ++survivors;
    }
  }
  if (survivors > 0) {
    ev.mu = sum / static_cast<double>(survivors);
    for (std::size_t i = 0; i < w.size(); ++i)
      if (mask[i] != 0.0) sq += (w[i] - ev.mu) * (w[i] - ev.mu);
    ev.sigma = std::sqrt(sq / static_cast<double>(survivors));
  }

  std::vector<std::size_t> pool = inactive;
  if (pool.size() < n) {
    pool.insert(pool.end(), removed_flat.begin(), removed_flat.end());
    std::sort(pool.begin(), pool.end());
  }
  const std::size_t to_add = std::min(n, pool.size());
  std::normal_distribution<double> normal(ev.mu, ev.sigma > 0.0 ? ev.sigma : 1.0);
  for (std::size_t k = 0; k < to_add; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
    const std::size_t flat = pool[k];
    mask[flat] = 1.0;
    w[flat] = ev.sigma > 0.0 ? normal(rng) : ev.mu;
    ev.added.push_back({flat / cols, flat % cols});
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Adaptive controller
// ---------------------------------------------------------------------------

inline constexpr double kZetaStep = 0.05;

struct ControllerConfig {
  double zeta_init = 0.3;
  double zeta_min = 0.05;
  double zeta_max = 0.7;
  std::size_t window = 5;     // q
  std::size_t patience = 10;  // p
  double min_delta = 1e-4;

  void validate() const {
    if (!(zeta_min >= 0.0 && zeta_min <= zeta_max && zeta_max <= 1.0)) {
      throw std::invalid_argument("ControllerConfig: need 0 <= zeta_min <= zeta_max <= 1");
    }
    if (window < 1) throw std::invalid_argument("ControllerConfig: window must be >= 1");
    if (patience < 1) throw std::invalid_argument("ControllerConfig: patience must be >= 1");
  }
};

struct RewireController {
  double zeta = 0.3;
  double zeta_min = 0.05;
  double zeta_max = 0.7;
  std::size_t window = 5;
  std::vector<double> accuracy_history;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stall_counter = 0;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  bool rewiring_active = true;
};

/// The initial rate is clamped into [zeta_min, zeta_max].
inline RewireController make_controller(const ControllerConfig& c) {
  c.validate();
  RewireController ctrl;
  ctrl.zeta = std::clamp(c.zeta_init, c.zeta_min, c.zeta_max);
  ctrl.zeta_min = c.zeta_min;
  ctrl.zeta_max = c.zeta_max;
  ctrl.window = c.window;
  ctrl.patience = c.patience;
  ctrl.min_delta = c.min_delta;
  return ctrl;
}

/// Appends the accuracy; once more than q values are recorded, lowers zeta by
/// one step if the accuracy beats the mean of the last q entries, otherwise
/// raises it, clamped to the bounds.
inline void adaptive_update_zeta(RewireController& ctrl, double val_accuracy) {
  if (!ctrl.rewiring_active) return;
  ctrl.accuracy_history.push_back(val_accuracy);
  const std::size_t n = ctrl.accuracy_history.size();
  if (n <= ctrl.window) return;
  const double avg = std::accumulate(ctrl.accuracy_history.end() - static_cast<std::ptrdiff_t>(ctrl.window),
                                     ctrl.accuracy_history.end(), 0.0) /
                     static_cast<double>(ctrl.window);
  if (val_accuracy > avg) {
    ctrl.zeta = std::max(ctrl.zeta_min, ctrl.zeta - kZetaStep);
  } else {
    ctrl.zeta = std::min(ctrl.zeta_max, ctrl.zeta + kZetaStep);
  }
}

/// Stops rewiring (never training) after `patience` epochs in a row without
/// val_loss < best_loss - min_delta.
inline void rewiring_early_stop(RewireController& ctrl, double val_loss) {
  if (!ctrl.rewiring_active) return;
  if (val_loss < ctrl.best_loss - ctrl.min_delta) {
    ctrl.best_loss = val_loss;
    ctrl.stall_counter = 0;
  } else {
    ++ctrl.stall_counter;
  }
  if (ctrl.stall_counter >= ctrl.patience) ctrl.rewiring_active = false;
}

/// One rewire event per sparsity-target layer, in model order, sharing `rng`.
inline std::vector<RewireEvent> rewire_model(GnnModel& model, double zeta, Rng& rng, std::size_t epoch = 0) {
  std::vector<RewireEvent> events;
  for (MaskedLinear* layer : model.sparsity_targets()) {
    RewireEvent ev = fixed_rewire_step(*layer, zeta, rng);
    ev.epoch = epoch;
    events.push_back(std::move(ev));
  }
  return events;
}

inline std::vector<RewireEvent> rewire_model(GnnModel& model, const RewireController& ctrl, Rng& rng,
                                             std::size_t epoch = 0) {
  if (!ctrl.rewiring_active) return {};
  return rewire_model(model, ctrl.zeta, rng, epoch);
}

}  // namespace rgnn
