#pragma once

// Line-delimited JSON run logs. Record types, in file order:
//   config  - dataset, model and training settings
//   epoch   - metrics after each epoch (epoch 0 is the untrained model)
//   rewire  - one per rewired layer per epoch
//   result  - checkpoint summary
// Nothing time-dependent is written, so identical runs give identical files.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgnn/trainer.hpp"

namespace rgnn {

using ojson = nlohmann::ordered_json;

inline ojson config_to_json(const std::string& dataset, const TrainConfig& c) {
  ojson j;
  j["type"] = "config";
  j["dataset"] = dataset;
  j["model"] = to_string(c.model.variant);
  j["hidden_dim"] = c.model.hidden_dim;
  j["blocks"] = c.model.blocks;
  j["pooling"] = c.model.readout_pooling() == Pooling::sum ? "sum" : "mean";
  j["mode"] = to_string(c.mode);
  j["epsilon"] = c.epsilon;
  j["zeta"] = c.zeta;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["dropout"] = c.dropout;
  j["zeta_min"] = c.controller.zeta_min;
  j["zeta_max"] = c.controller.zeta_max;
  j["window"] = c.controller.window;
  j["rewire_patience"] = c.controller.patience;
  j["min_delta"] = c.controller.min_delta;
  j["mask_all"] = c.mask_all;
  j["split"] = c.split;
  j["seed"] = c.seed;
  return j;
}

inline ojson epoch_to_json(const EpochMetrics& m) {
  ojson j;
  j["type"] = "epoch";
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["train_acc"] = m.train_acc;
  j["val_loss"] = m.val_loss;
  j["val_acc"] = m.val_acc;
  j["test_loss"] = m.test_loss;
  j["test_acc"] = m.test_acc;
  j["zeta"] = m.zeta;
  j["rewiring_active"] = m.rewiring_active;
  j["params_active"] = m.params_active;
  return j;
}

inline ojson rewire_to_json(const RewireEvent& ev) {
  const auto positions = [](const std::vector<Position>& ps) {
    ojson a = ojson::array();
    for (const Position& p : ps) a.push_back({p.row, p.col});
    return a;
  };
  ojson j;
  j["type"] = "rewire";
  j["epoch"] = ev.epoch;
  j["layer"] = ev.layer;
  j["zeta"] = ev.zeta;
  j["active"] = ev.active;
  j["mu"] = ev.mu;
  j["sigma"] = ev.sigma;
  j["removed"] = positions(ev.removed);
  j["added"] = positions(ev.added);
  return j;
}

inline ojson result_to_json(const RunResult& r) {
  ojson j;
  j["type"] = "result";
  j["seed"] = r.seed;
  j["epochs"] = r.epochs_trained();
  j["best_epoch"] = r.best_epoch;
  j["best_val_acc"] = r.best_val_acc;
  j["best_val_loss"] = r.best_val_loss;
  j["test_acc"] = r.test_acc;
  j["stopped_early"] = r.stopped_early;
  j["rewire_events"] = r.rewire_events;
  j["params_total"] = r.params.total;
  j["params_active"] = r.params.active;
  j["target_total"] = r.params.target_total;
  j["target_active"] = r.params.target_active;
  return j;
}

/// Writes every record of one run to a file as it happens.
class RunLogger : public RunObserver {
 public:
  RunLogger(const std::filesystem::path& path, std::string dataset) : dataset_(std::move(dataset)) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write run log " + path.string());
  }

  void on_start(const TrainConfig& c, const GnnModel&) override { write(config_to_json(dataset_, c)); }

  void on_epoch(const EpochMetrics& m, std::span<const RewireEvent> events, const GnnModel&) override {
    write(epoch_to_json(m));
    for (const RewireEvent& ev : events) write(rewire_to_json(ev));
  }

  void on_finish(const RunResult& r) override {
    write(result_to_json(r));
    out_.flush();
  }

 private:
  void write(const ojson& j) { out_ << j.dump() << '\n'; }

  std::string dataset_;
  std::ofstream out_;
};

/// The parts of a finished run log needed to rebuild result tables.
struct RunLogSummary {
  std::string dataset;
  std::string model;
  Mode mode = Mode::baseline;
  double epsilon = 0.0;
  double zeta = 0.0;
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  std::size_t params_active = 0;
};

/// Returns nullopt for a log without a result record (an interrupted run).
inline std::optional<RunLogSummary> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read run log " + path.string());
  std::optional<ojson> config, result;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "config") config = j;
    if (type == "result") result = j;
  }
  if (!config) throw std::runtime_error(path.string() + ": no config record");
  if (!result) return std::nullopt;
  try {
    RunLogSummary s;
    s.dataset = config->at("dataset").get<std::string>();
    s.model = config->at("model").get<std::string>();
    s.mode = parse_mode(config->at("mode").get<std::string>());
    s.epsilon = config->at("epsilon").get<double>();
    s.zeta = config->at("zeta").get<double>();
    s.seed = result->at("seed").get<std::uint64_t>();
    s.test_acc = result->at("test_acc").get<double>();
    s.params_active = result->at("params_active").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace rgnn
