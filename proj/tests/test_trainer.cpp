#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rgnn/trainer.hpp"
#include "support/mutag.hpp"
#include "support/random_graphs.hpp"

using namespace rgnn;

namespace {

TrainConfig small_config(Mode mode, std::size_t epochs = 5) {
  TrainConfig c;
  c.model.variant = Variant::gine;
  c.model.hidden_dim = 16;
  c.model.blocks = 2;
  c.mode = mode;
  c.max_epochs = epochs;
  c.lr = 1e-3;
  return c;
}

// Eight graphs; class 0 are paths labelled A, class 1 are cycles labelled B.
GraphDataset toy_dataset() {
  GraphDataset ds;
  ds.name = "TOY";
  ds.num_classes = 2;
  ds.node_dim = 2;
  ds.edge_dim = 1;
  for (std::size_t i = 0; i < 8; ++i) {
    Graph g;
    g.num_nodes = 3 + i / 2;
    g.label = i % 2;
    g.node_features = Tensor::zeros(g.num_nodes, 2);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      g.node_features(v, g.label) = 1.0;
      if (v + 1 < g.num_nodes) g.edges.emplace_back(v, v + 1);
    }
    if (g.label == 1) g.edges.emplace_back(g.num_nodes - 1, 0);
    g.edge_features = Tensor::filled(g.edges.size(), 1, 1.0);
    ds.graphs.push_back(g);
  }
  return ds;
}

std::vector<std::size_t> all_indices(const GraphDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

struct Recorder : RunObserver {
  std::vector<EpochMetrics> epochs;
  std::vector<std::vector<RewireEvent>> events;
  std::vector<std::vector<std::size_t>> active_per_layer;
  std::size_t nonzero_masked = 0;

  void on_epoch(const EpochMetrics& m, std::span<const RewireEvent> ev, const GnnModel& model) override {
    epochs.push_back(m);
    events.emplace_back(ev.begin(), ev.end());
    std::vector<std::size_t> active;
    for (const MaskedLinear* l : model.linear_layers()) {
      active.push_back(l->active_connections());
      const Tensor& w = l->weight.value();
      for (std::size_t i = 0; i < w.size(); ++i) nonzero_masked += l->mask[i] == 0.0 && w[i] != 0.0;
    }
    active_per_layer.push_back(active);
  }
};

void expect_same_curves(const RunResult& a, const RunResult& b) {
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
    EXPECT_EQ(a.curve[e].val_loss, b.curve[e].val_loss);
    EXPECT_EQ(a.curve[e].test_acc, b.curve[e].test_acc);
    EXPECT_EQ(a.curve[e].zeta, b.curve[e].zeta);
  }
  EXPECT_EQ(a.test_acc, b.test_acc);
}

}  // namespace

TEST(Evaluate, HandCountedAccuracy) {
  const Tensor logits = Tensor::from_rows({{1, 2}, {3, 0}, {0, 0}});
  EXPECT_EQ(count_correct(logits, {1, 1, 0}), 2u);
  EXPECT_EQ(argmax_row(logits, 2), 0u);
}

TEST(Evaluate, UniformLogitsPickFirstClass) {
  const GraphDataset& ds = oracle::mutag();
  Rng rng = make_rng(1, Stream::init);
  GnnModel m = build_model({Variant::gin, 8, 1, {}}, dims_of(ds), rng);
  m.head_mlp->second.weight.value().fill(0.0);
  m.head_mlp->second.bias.value().fill(0.0);
  const auto idx = all_indices(ds);
  std::size_t class0 = 0;
  for (const Graph& g : ds.graphs) class0 += g.label == 0;
  const EvalResult r = evaluate(m, ds, idx);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(class0) / static_cast<double>(ds.size()));
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(Evaluate, PerfectLogitsGiveFullAccuracy) {
  const GraphDataset& ds = oracle::mutag();
  Rng rng = make_rng(1, Stream::init);
  GnnModel m = build_model({Variant::gin, 8, 1, {}}, dims_of(ds), rng);
  m.head_mlp->second.weight.value().fill(0.0);
  m.head_mlp->second.bias.value() = Tensor({2}, std::vector<double>{0.0, 3.0});
  std::vector<std::size_t> class1;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.graphs[i].label == 1) class1.push_back(i);
  EXPECT_EQ(evaluate(m, ds, class1).accuracy, 1.0);
}

TEST(Evaluate, EmptySplitErrors) {
  const GraphDataset& ds = oracle::mutag();
  Rng rng = make_rng(1, Stream::init);
  GnnModel m = build_model({Variant::gin, 8, 1, {}}, dims_of(ds), rng);
  EXPECT_THROW(evaluate(m, ds, {}), std::invalid_argument);
}

TEST(TrainEpoch, ZeroLearningRateLeavesParametersUnchanged) {
  const GraphDataset& ds = oracle::mutag();
  TrainConfig c = small_config(Mode::baseline);
  c.lr = 0.0;
  Rng rng = make_rng(2, Stream::init);
  GnnModel m = build_model(c.model, dims_of(ds), rng);
  std::vector<Tensor> before;
  for (const Var& p : m.parameters()) before.push_back(p.value());
  Adam adam(m.parameters(), {.lr = 0.0});
  Rng s = make_rng(2, Stream::shuffle), d = make_rng(2, Stream::dropout);
  const auto idx = all_indices(ds);
  const EvalResult r = train_epoch(m, ds, idx, adam, c, s, d);
  EXPECT_GT(r.loss, 0.0);
  EXPECT_GE(r.accuracy, 0.0);
  std::size_t k = 0;
  for (const Var& p : m.parameters()) EXPECT_EQ(p.value(), before[k++]);
}

TEST(TrainEpoch, NonFiniteLossAborts) {
  const GraphDataset& ds = oracle::mutag();
  TrainConfig c = small_config(Mode::baseline);
  Rng rng = make_rng(3, Stream::init);
  GnnModel m = build_model(c.model, dims_of(ds), rng);
  m.head_mlp->second.bias.value()[0] = std::numeric_limits<double>::quiet_NaN();
  Adam adam(m.parameters());
  Rng s = make_rng(3, Stream::shuffle), d = make_rng(3, Stream::dropout);
  const auto idx = all_indices(ds);
  EXPECT_THROW(train_epoch(m, ds, idx, adam, c, s, d), std::runtime_error);
}

TEST(TrainEpoch, ToyDatasetIsFitted) {
  const GraphDataset ds = toy_dataset();
  TrainConfig c = small_config(Mode::baseline);
  c.batch_size = 8;
  Rng rng = make_rng(4, Stream::init);
  GnnModel m = build_model(c.model, dims_of(ds), rng);
  Adam adam(m.parameters(), {.lr = 1e-3});
  Rng s = make_rng(4, Stream::shuffle), d = make_rng(4, Stream::dropout);
  const auto idx = all_indices(ds);
  EvalResult last;
  for (int epoch = 0; epoch < 200; ++epoch) last = train_epoch(m, ds, idx, adam, c, s, d);
  EXPECT_EQ(last.accuracy, 1.0);
  EXPECT_EQ(evaluate(m, ds, idx).accuracy, 1.0);
}

TEST(RunTraining, SameSeedSameCurves) {
  for (Mode mode : kAllModes) {
    TrainConfig c = small_config(mode);
    c.epsilon = 0.5;
    c.zeta = 0.3;
    expect_same_curves(run_training(c, oracle::mutag()), run_training(c, oracle::mutag()));
  }
}

TEST(RunTraining, ZeroEpochsReportsInitialModel) {
  TrainConfig c = small_config(Mode::baseline, 0);
  const RunResult r = run_training(c, oracle::mutag());
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.test_acc, r.curve[0].test_acc);
  EXPECT_EQ(r.epochs_trained(), 0u);
}

TEST(RunTraining, BaselineHasNoMasksOrRewiring) {
  Recorder rec;
  const RunResult r = run_training(small_config(Mode::baseline), oracle::mutag(), &rec);
  EXPECT_EQ(r.rewire_events, 0u);
  EXPECT_EQ(r.params.active, r.params.total);
  for (const auto& ev : rec.events) EXPECT_TRUE(ev.empty());
}

TEST(RunTraining, NinetyPercentSparsityKeepsATenth) {
  TrainConfig c = small_config(Mode::sparse, 2);
  c.model.hidden_dim = 64;
  c.epsilon = 0.9;
  const RunResult r = run_training(c, oracle::mutag());
  const double frac = static_cast<double>(r.params.target_active) / static_cast<double>(r.params.target_total);
  EXPECT_NEAR(frac, 0.1, 0.02);
}

TEST(RunTraining, FixedModeRewiresEveryEpoch) {
  TrainConfig c = small_config(Mode::fixed, 6);
  c.epsilon = 0.5;
  c.zeta = 0.2;
  Recorder rec;
  GnnModel probe = [&] {
    Rng rng = make_rng(0, Stream::init);
    return build_model(c.model, dims_of(oracle::mutag()), rng);
  }();
  const std::size_t targets = probe.sparsity_targets().size();
  const RunResult r = run_training(c, oracle::mutag(), &rec);
  ASSERT_EQ(rec.events.size(), r.curve.size());
  EXPECT_TRUE(rec.events[0].empty());
  for (std::size_t e = 1; e < rec.events.size(); ++e) {
    ASSERT_EQ(rec.events[e].size(), targets);
    for (const RewireEvent& ev : rec.events[e]) {
      EXPECT_EQ(ev.epoch, e);
      EXPECT_EQ(ev.zeta, 0.2);
    }
  }
}

TEST(RunTraining, MaskedModesPreserveActiveCountsAndZeros) {
  for (Mode mode : {Mode::sparse, Mode::fixed, Mode::adaptive}) {
    TrainConfig c = small_config(mode, 8);
    c.epsilon = 0.3;
    c.zeta = 0.3;
    Recorder rec;
    run_training(c, oracle::mutag(), &rec);
    for (const auto& active : rec.active_per_layer) EXPECT_EQ(active, rec.active_per_layer.front()) << to_string(mode);
    EXPECT_EQ(rec.nonzero_masked, 0u) << to_string(mode);
    for (const EpochMetrics& m : rec.epochs) EXPECT_EQ(m.params_active, rec.epochs.front().params_active);
  }
}

TEST(RunTraining, AdaptiveRateMovesInSteps) {
  TrainConfig c = small_config(Mode::adaptive, 25);
  c.epsilon = 0.3;
  c.zeta = 0.3;
  c.controller.window = 2;
  const RunResult r = run_training(c, oracle::mutag());
  for (std::size_t e = 1; e < r.curve.size(); ++e) {
    const double z = r.curve[e].zeta;
    EXPECT_GE(z, 0.05 - 1e-12);
    EXPECT_LE(z, 0.7 + 1e-12);
    const double step = std::abs(z - r.curve[e - 1].zeta);
    if (step > 1e-12) EXPECT_NEAR(step, kZetaStep, 1e-12);
  }
}

TEST(RunTraining, CheckpointIsEarliestBestValidationEpoch) {
  TrainConfig c = small_config(Mode::baseline, 30);
  const RunResult r = run_training(c, oracle::mutag());
  std::size_t best = 0;
  for (std::size_t e = 1; e < r.curve.size(); ++e)
    if (r.curve[e].val_acc > r.curve[best].val_acc) best = e;
  EXPECT_EQ(r.best_epoch, best);
  EXPECT_EQ(r.test_acc, r.curve[best].test_acc);
}

TEST(RunTraining, EarlyStoppingMatchesTruncatedCurve) {
  TrainConfig c = small_config(Mode::baseline, 60);
  c.early_stop_patience = 3;
  const RunResult stopped = run_training(c, oracle::mutag());
  c.early_stop_patience = 1000;
  const RunResult full = run_training(c, oracle::mutag());
  ASSERT_LE(stopped.curve.size(), full.curve.size());
  for (std::size_t e = 0; e < stopped.curve.size(); ++e)
    EXPECT_EQ(stopped.curve[e].val_loss, full.curve[e].val_loss);
  if (stopped.stopped_early) {
    const auto& cv = stopped.curve;
    double best = cv[0].val_loss;
    std::size_t since = 0;
    for (std::size_t e = 1; e < cv.size(); ++e) {
      if (cv[e].val_loss < best) {
        best = cv[e].val_loss;
        since = 0;
      } else {
        ++since;
      }
    }
    EXPECT_EQ(since, 3u);
  }
}

TEST(RunTraining, DropoutModeIsDeterministicAndDiffersFromBaseline) {
  const RunResult a = run_training(small_config(Mode::dropout), oracle::mutag());
  const RunResult b = run_training(small_config(Mode::dropout), oracle::mutag());
  const RunResult base = run_training(small_config(Mode::baseline), oracle::mutag());
  expect_same_curves(a, b);
  EXPECT_NE(a.curve[1].train_loss, base.curve[1].train_loss);
}

TEST(RunTraining, InvalidConfigErrors) {
  TrainConfig c = small_config(Mode::sparse);
  c.epsilon = 1.5;
  EXPECT_THROW(run_training(c, oracle::mutag()), std::invalid_argument);
  c = small_config(Mode::fixed);
  c.zeta = -0.1;
  EXPECT_THROW(run_training(c, oracle::mutag()), std::invalid_argument);
}

TEST(MultiSeed, SingleSeedEqualsSingleRun) {
  TrainConfig c = small_config(Mode::sparse, 3);
  c.epsilon = 0.5;
  c.seed = 7;
  const MultiSeedResult m = multi_seed_run(c, oracle::mutag(), 1);
  const RunResult r = run_training(c, oracle::mutag());
  EXPECT_EQ(m.acc_mean, r.test_acc);
  EXPECT_EQ(m.acc_std, 0.0);
  EXPECT_EQ(m.params_active_mean, static_cast<double>(r.params.active));
}

TEST(MultiSeed, RerunAndThreadCountGiveIdenticalAggregates) {
  TrainConfig c = small_config(Mode::fixed, 3);
  c.epsilon = 0.3;
  c.zeta = 0.1;
  const MultiSeedResult a = multi_seed_run(c, oracle::mutag(), 4, 1);
  const MultiSeedResult b = multi_seed_run(c, oracle::mutag(), 4, 3);
  EXPECT_EQ(a.acc_mean, b.acc_mean);
  EXPECT_EQ(a.acc_std, b.acc_std);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.runs[i].seed, i);
    expect_same_curves(a.runs[i], b.runs[i]);
  }
  EXPECT_GE(a.acc_mean, a.acc_min);
  EXPECT_LE(a.acc_mean, a.acc_max);
}

TEST(MultiSeed, AggregateUsesSampleStandardDeviation) {
  std::vector<RunResult> runs(3);
  runs[0].test_acc = 0.5;
  runs[1].test_acc = 0.7;
  runs[2].test_acc = 0.9;
  const MultiSeedResult m = aggregate(runs);
  EXPECT_NEAR(m.acc_mean, 0.7, 1e-15);
  EXPECT_NEAR(m.acc_std, 0.2, 1e-15);
  EXPECT_EQ(m.acc_min, 0.5);
  EXPECT_EQ(m.acc_max, 0.9);
  EXPECT_THROW(multi_seed_run(small_config(Mode::baseline), oracle::mutag(), 0), std::invalid_argument);
}
