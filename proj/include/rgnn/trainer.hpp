#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rgnn/adam.hpp"
#include "rgnn/layers.hpp"
#include "rgnn/rewiring.hpp"
#include "rgnn/sparsity.hpp"

namespace rgnn {

enum class Mode { baseline, dropout, sparse, fixed, adaptive };

inline constexpr Mode kAllModes[] = {Mode::baseline, Mode::dropout, Mode::sparse, Mode::fixed, Mode::adaptive};

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::dropout: return "dropout";
    case Mode::sparse: return "sparse";
    case Mode::fixed: return "fixed";
    case Mode::adaptive: return "adaptive";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : kAllModes)
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mode '" + s + "' (expected baseline, dropout, sparse, fixed, adaptive)");
}

inline bool uses_masks(Mode m) { return m == Mode::sparse || m == Mode::fixed || m == Mode::adaptive; }

/// One training run. epsilon is used by the masked modes only; zeta is the
/// fixed rate in fixed mode and the initial rate in adaptive mode.
struct TrainConfig {
  ModelConfig model;
  Mode mode = Mode::baseline;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t early_stop_patience = 20;
  double dropout = 0.5;
  double epsilon = 0.0;
  double zeta = 0.0;
  ControllerConfig controller;  // zeta_init is taken from `zeta`
  bool mask_all = false;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (!(lr >= 0.0 && std::isfinite(lr))) throw std::invalid_argument("lr must be a finite value >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
    if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("zeta must be in [0, 1]");
    controller.validate();
  }

  ControllerConfig controller_config() const {
    ControllerConfig c = controller;
    c.zeta_init = zeta;
    return c;
  }
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double zeta = 0.0;              // rate applied at the end of this epoch (0 when not rewiring)
  bool rewiring_active = false;
  std::size_t params_active = 0;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> curve;  // curve[0] is epoch 0
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double best_val_loss = 0.0;
  double test_acc = 0.0;  // at best_epoch
  bool stopped_early = false;
  std::size_t rewire_events = 0;
  ParamReport params;
  double wall_seconds = 0.0;

  std::size_t epochs_trained() const { return curve.empty() ? 0 : curve.size() - 1; }
};

/// Hooks for logging and invariant checks. All default to no-ops.
struct RunObserver {
  virtual ~RunObserver() = default;
  virtual void on_start(const TrainConfig&, const GnnModel&) {}
  virtual void on_epoch(const EpochMetrics&, std::span<const RewireEvent>, const GnnModel&) {}
  virtual void on_finish(const RunResult&) {}
};

/// Index of the largest logit, first one on ties.
inline std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c)
    if (logits(r, c) > logits(r, best)) best = c;
  return best;
}

inline std::size_t count_correct(const Tensor& logits, const std::vector<std::size_t>& labels) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) n += argmax_row(logits, r) == labels[r];
  return n;
}

/// Eval-mode accuracy and mean cross-entropy over `indices`.
inline EvalResult evaluate(GnnModel& model, const GraphDataset& ds, std::span<const std::size_t> indices,
                           std::size_t batch_size = 32) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty split");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Batch b = batch_graphs(ds, chunk);
    const Var logits = model_forward(b, model, {.train = false});
    loss_sum += softmax_cross_entropy(logits, b.labels).value().item() * static_cast<double>(chunk.size());
    correct += count_correct(logits.value(), b.labels);
  }
  const double n = static_cast<double>(indices.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

inline void apply_grad_masks(GnnModel& model) {
  for (MaskedLinear* l : model.linear_layers()) apply_grad_mask(*l);
}

/// One pass over shuffled mini-batches. Loss and accuracy are accumulated
/// from the training-mode forward passes.
inline EvalResult train_epoch(GnnModel& model, const GraphDataset& ds, std::span<const std::size_t> train_idx,
                              Adam& optimizer, const TrainConfig& config, Rng& shuffle_rng, Rng& dropout_rng) {
  if (train_idx.empty()) throw std::invalid_argument("train_epoch: empty training split");
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const ForwardOptions fwd{.train = true,
                           .dropout = config.mode == Mode::dropout ? config.dropout : 0.0,
                           .rng = &dropout_rng};
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::span<const std::size_t> chunk(order.data() + start, std::min(config.batch_size, order.size() - start));
    const Batch b = batch_graphs(ds, chunk);
    optimizer.zero_grad();
    const Var logits = model_forward(b, model, fwd);
    const Var loss = softmax_cross_entropy(logits, b.labels);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw std::runtime_error("non-finite training loss at batch starting " + std::to_string(start));
    }
    correct += count_correct(logits.value(), b.labels);
    loss_sum += value * static_cast<double>(chunk.size());
    backward(loss);
    apply_grad_masks(model);
    optimizer.step();
  }
  const double n = static_cast<double>(order.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

namespace trainer_detail {

// Moment buffers at removed and regrown positions start fresh.
inline void reset_optimizer(Adam& optimizer, GnnModel& model, std::span<const RewireEvent> events) {
  std::map<std::string, MaskedLinear*> by_name;
  for (MaskedLinear* l : model.sparsity_targets()) by_name[l->name] = l;
  for (const RewireEvent& ev : events) {
    MaskedLinear* l = by_name.at(ev.layer);
    const std::size_t cols = l->in_features();
    std::vector<std::size_t> flat;
    for (const Position& p : ev.removed) flat.push_back(p.row * cols + p.col);
    for (const Position& p : ev.added) flat.push_back(p.row * cols + p.col);
    optimizer.reset_entries(l->weight, flat);
  }
}

}  // namespace trainer_detail

/// Full run: split, build, mask, then per epoch train -> evaluate -> adapt
/// zeta -> rewire. Stops when val loss has not strictly improved for
/// `early_stop_patience` epochs. Reports test accuracy at the epoch with the
/// best val accuracy (earliest on ties, epoch 0 included).
inline RunResult run_training(const TrainConfig& config, const GraphDataset& ds, RunObserver* observer = nullptr) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Split split = split_dataset(ds, config.split, config.seed);
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw std::invalid_argument("run_training: split of " + std::to_string(ds.size()) +
                                " graphs leaves an empty partition");
  }

  Rng init_rng = make_rng(config.seed, Stream::init);
  GnnModel model = build_model(config.model, dims_of(ds), init_rng);
  if (uses_masks(config.mode)) {
    Rng mask_rng = make_rng(config.seed, Stream::mask);
    apply_sparsity(model, {config.epsilon, config.mask_all}, mask_rng);
  }
  Adam optimizer(model.parameters(), {.lr = config.lr});
  Rng shuffle_rng = make_rng(config.seed, Stream::shuffle);
  Rng dropout_rng = make_rng(config.seed, Stream::dropout);
  Rng rewire_rng = make_rng(config.seed, Stream::rewire);

  const bool adaptive = config.mode == Mode::adaptive;
  const bool fixed = config.mode == Mode::fixed;
  RewireController ctrl = make_controller(config.controller_config());
  if (!adaptive) ctrl.rewiring_active = fixed;

  if (observer) observer->on_start(config, model);

  RunResult result;
  result.seed = config.seed;
  const auto current_zeta = [&] { return adaptive ? ctrl.zeta : fixed ? config.zeta : 0.0; };

  EpochMetrics init;
  {
    const EvalResult tr = evaluate(model, ds, split.train, config.batch_size);
    const EvalResult va = evaluate(model, ds, split.val, config.batch_size);
    const EvalResult te = evaluate(model, ds, split.test, config.batch_size);
    init = {0, tr.loss, tr.accuracy, va.loss, va.accuracy, te.loss, te.accuracy,
            current_zeta(), ctrl.rewiring_active, count_params(model).active};
  }
  result.curve.push_back(init);
  if (observer) observer->on_epoch(init, {}, model);

  result.best_epoch = 0;
  result.best_val_acc = init.val_acc;
  result.best_val_loss = init.val_loss;
  result.test_acc = init.test_acc;
  double best_loss_for_stop = init.val_loss;
  std::size_t stall = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const EvalResult tr = train_epoch(model, ds, split.train, optimizer, config, shuffle_rng, dropout_rng);
    const EvalResult va = evaluate(model, ds, split.val, config.batch_size);
    const EvalResult te = evaluate(model, ds, split.test, config.batch_size);

    std::vector<RewireEvent> events;
    if (adaptive) {
      adaptive_update_zeta(ctrl, va.accuracy);
      rewiring_early_stop(ctrl, va.loss);
    }
    const double zeta = current_zeta();
    if ((adaptive || fixed) && ctrl.rewiring_active) {
      events = rewire_model(model, zeta, rewire_rng, epoch);
      trainer_detail::reset_optimizer(optimizer, model, events);
    }
    result.rewire_events += events.size();

    EpochMetrics m{epoch, tr.loss, tr.accuracy, va.loss, va.accuracy, te.loss, te.accuracy,
                   zeta, ctrl.rewiring_active, count_params(model).active};
    result.curve.push_back(m);
    if (observer) observer->on_epoch(m, events, model);

    if (va.accuracy > result.best_val_acc) {
      result.best_epoch = epoch;
      result.best_val_acc = va.accuracy;
      result.best_val_loss = va.loss;
      result.test_acc = te.accuracy;
    }
    if (va.loss < best_loss_for_stop) {
      best_loss_for_stop = va.loss;
      stall = 0;
    } else if (++stall >= config.early_stop_patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }

  result.params = count_params(model);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (observer) observer->on_finish(result);
  return result;
}

struct MultiSeedResult {
  std::vector<RunResult> runs;  // in seed order
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample standard deviation, 0 for a single run
  double acc_min = 0.0;
  double acc_max = 0.0;
  double params_active_mean = 0.0;
};

inline MultiSeedResult aggregate(std::vector<RunResult> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  MultiSeedResult r;
  const double n = static_cast<double>(runs.size());
  r.acc_min = r.acc_max = runs.front().test_acc;
  for (const RunResult& run : runs) {
    r.acc_mean += run.test_acc;
    r.params_active_mean += static_cast<double>(run.params.active);
    r.acc_min = std::min(r.acc_min, run.test_acc);
    r.acc_max = std::max(r.acc_max, run.test_acc);
  }
  r.acc_mean /= n;
  r.params_active_mean /= n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (const RunResult& run : runs) ss += (run.test_acc - r.acc_mean) * (run.test_acc - r.acc_mean);
    r.acc_std = std::sqrt(ss / (n - 1.0));
  }
  r.runs = std::move(runs);
  return r;
}

using ObserverFactory = std::function<std::unique_ptr<RunObserver>(std::uint64_t seed)>;

/// Runs seeds config.seed + i for i < n_seeds on up to `jobs` threads.
/// Results do not depend on `jobs`.
inline MultiSeedResult multi_seed_run(const TrainConfig& config, const GraphDataset& ds, std::size_t n_seeds,
                                      std::size_t jobs = 1, const ObserverFactory& make_observer = {}) {
  if (n_seeds < 1) throw std::invalid_argument("multi_seed_run: n_seeds must be >= 1");
  config.validate();
  std::vector<RunResult> runs(n_seeds);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < n_seeds; i = next++) {
      try {
        TrainConfig c = config;
        c.seed = config.seed + i;
        std::unique_ptr<RunObserver> obs = make_observer ? make_observer(c.seed) : nullptr;
        runs[i] = run_training(c, ds, obs.get());
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_seeds;
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, n_seeds);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(std::move(runs));
}

}  // namespace rgnn
