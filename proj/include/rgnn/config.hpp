#pragma once

// Run settings shared by the config file and the command line. A config file
// holds flat `key: value` lines (YAML subset, `#` comments); every flag has
// the key of the same name with dashes turned into underscores. Precedence:
// flag, then file, then default.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "rgnn/experiments.hpp"
#include "rgnn/format.hpp"
#include "rgnn/trainer.hpp"

namespace rgnn {

/// Bad flag or config content; the CLI maps it to exit code 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunSettings {
  std::string dataset;
  TrainConfig train;
  std::size_t seeds = 1;
  std::string out = "out";
  std::size_t jobs = 1;
  std::vector<double> epsilons{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> zetas{0.0, 0.1, 0.3, 0.5, 0.7};
  std::vector<Mode> modes{Mode::fixed, Mode::adaptive};

  SweepSpec sweep_spec(const std::string& dataset_name) const {
    SweepSpec s;
    s.dataset = dataset_name;
    s.base = train;
    s.epsilons = epsilons;
    s.zetas = zetas;
    s.modes = modes;
    s.n_seeds = seeds;
    s.jobs = jobs;
    return s;
  }
};

namespace config_detail {

inline double unit_interval(const std::string& key, const std::string& v) {
  const double x = parse_double(v, key);
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(key + " must be in [0, 1], got " + v);
  return x;
}

inline std::size_t positive(const std::string& key, const std::string& v) {
  const auto x = static_cast<std::size_t>(parse_uint(v, key));
  if (x < 1) throw ConfigError(key + " must be >= 1");
  return x;
}

inline std::vector<std::string> list_items(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t[");
    const auto b = item.find_last_not_of(" \t]");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Setting {
  const char* key;
  const char* help;
  std::function<void(RunSettings&, const std::string&)> apply;
};

inline const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      {"dataset", "TU dataset directory (or name under $RGNN_DATA_DIR or ./data)",
       [](RunSettings& s, const std::string& v) { s.dataset = v; }},
      {"model", "gcn, gcne, gin or gine",
       [](RunSettings& s, const std::string& v) { s.train.model.variant = parse_variant(v); }},
      {"mode", "baseline, dropout, sparse, fixed or adaptive (a sweep runs only this mode)",
       [](RunSettings& s, const std::string& v) {
         s.train.mode = parse_mode(v);
         s.modes = {s.train.mode};
       }},
      {"modes", "comma-separated modes swept by `sweep`",
       [](RunSettings& s, const std::string& v) {
         std::vector<Mode> modes;
         for (const auto& item : list_items(v)) modes.push_back(parse_mode(item));
         if (modes.empty()) throw ConfigError("modes: empty list");
         s.modes = modes;
         s.train.mode = modes.front();
       }},
      {"zeta_mode", "fixed, adaptive or none (same as mode fixed / adaptive / sparse)",
       [](RunSettings& s, const std::string& v) {
         if (v == "fixed") s.train.mode = Mode::fixed;
         else if (v == "adaptive") s.train.mode = Mode::adaptive;
         else if (v == "none") s.train.mode = Mode::sparse;
         else throw ConfigError("zeta_mode: expected fixed, adaptive or none, got '" + v + "'");
         s.modes = {s.train.mode};
       }},
      {"epsilon", "fraction of masked weights removed at initialisation",
       [](RunSettings& s, const std::string& v) { s.train.epsilon = unit_interval("epsilon", v); }},
      {"zeta", "rewiring rate (initial rate in adaptive mode)",
       [](RunSettings& s, const std::string& v) { s.train.zeta = unit_interval("zeta", v); }},
      {"zeta_init", "alias of zeta",
       [](RunSettings& s, const std::string& v) { s.train.zeta = unit_interval("zeta_init", v); }},
      {"epsilons", "comma-separated epsilon grid for `sweep`",
       [](RunSettings& s, const std::string& v) {
         s.epsilons.clear();
         for (const auto& item : list_items(v)) s.epsilons.push_back(unit_interval("epsilons", item));
         if (s.epsilons.empty()) throw ConfigError("epsilons: empty list");
       }},
      {"zetas", "comma-separated zeta grid for `sweep`",
       [](RunSettings& s, const std::string& v) {
         s.zetas.clear();
         for (const auto& item : list_items(v)) s.zetas.push_back(unit_interval("zetas", item));
         if (s.zetas.empty()) throw ConfigError("zetas: empty list");
       }},
      {"seeds", "number of seeds (seed, seed+1, ...)",
       [](RunSettings& s, const std::string& v) { s.seeds = positive("seeds", v); }},
      {"seed", "base seed", [](RunSettings& s, const std::string& v) { s.train.seed = parse_uint(v, "seed"); }},
      {"epochs", "maximum training epochs",
       [](RunSettings& s, const std::string& v) { s.train.max_epochs = parse_uint(v, "epochs"); }},
      {"out", "output directory", [](RunSettings& s, const std::string& v) { s.out = v; }},
      {"jobs", "worker threads for multi-seed runs",
       [](RunSettings& s, const std::string& v) { s.jobs = positive("jobs", v); }},
      {"lr", "Adam learning rate",
       [](RunSettings& s, const std::string& v) {
         s.train.lr = parse_double(v, "lr");
         if (!(s.train.lr >= 0.0)) throw ConfigError("lr must be >= 0");
       }},
      {"batch_size", "graphs per mini-batch",
       [](RunSettings& s, const std::string& v) { s.train.batch_size = positive("batch_size", v); }},
      {"hidden_dim", "embedding width",
       [](RunSettings& s, const std::string& v) { s.train.model.hidden_dim = positive("hidden_dim", v); }},
      {"blocks", "message-passing blocks",
       [](RunSettings& s, const std::string& v) { s.train.model.blocks = positive("blocks", v); }},
      {"pooling", "readout pooling: sum or mean (default by model family)",
       [](RunSettings& s, const std::string& v) {
         if (v == "sum") s.train.model.pooling = Pooling::sum;
         else if (v == "mean") s.train.model.pooling = Pooling::mean;
         else throw ConfigError("pooling: expected sum or mean, got '" + v + "'");
       }},
      {"dropout", "dropout rate in dropout mode",
       [](RunSettings& s, const std::string& v) {
         s.train.dropout = parse_double(v, "dropout");
         if (!(s.train.dropout >= 0.0 && s.train.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
       }},
      {"patience", "epochs without val-loss improvement before training stops",
       [](RunSettings& s, const std::string& v) { s.train.early_stop_patience = positive("patience", v); }},
      {"zeta_min", "adaptive lower bound",
       [](RunSettings& s, const std::string& v) { s.train.controller.zeta_min = unit_interval("zeta_min", v); }},
      {"zeta_max", "adaptive upper bound",
       [](RunSettings& s, const std::string& v) { s.train.controller.zeta_max = unit_interval("zeta_max", v); }},
      {"window", "adaptive sliding-window length",
       [](RunSettings& s, const std::string& v) { s.train.controller.window = positive("window", v); }},
      {"rewire_patience", "epochs without val-loss improvement before rewiring stops",
       [](RunSettings& s, const std::string& v) { s.train.controller.patience = positive("rewire_patience", v); }},
      {"min_delta", "minimum val-loss improvement for rewiring",
       [](RunSettings& s, const std::string& v) {
         s.train.controller.min_delta = parse_double(v, "min_delta");
         if (!(s.train.controller.min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
       }},
      {"mask_all", "also mask embedding and readout layers",
       [](RunSettings& s, const std::string& v) { s.train.mask_all = parse_bool("mask_all", v); }},
  };
  return table;
}

}  // namespace config_detail

struct SettingInfo {
  std::string key;
  std::string help;
};

inline std::vector<SettingInfo> setting_keys() {
  std::vector<SettingInfo> out;
  for (const auto& s : config_detail::settings()) out.push_back({s.key, s.help});
  return out;
}

/// Applies one setting; errors name the key.
inline void apply_setting(RunSettings& s, const std::string& key, const std::string& value) {
  for (const auto& setting : config_detail::settings()) {
    if (key != setting.key) continue;
    try {
      setting.apply(s, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return;
  }
  throw ConfigError("unknown setting '" + key + "'");
}

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat key/value entries of a config file, in file order.
inline std::vector<ConfigEntry> read_config_entries(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.mark.line + 1) + ": malformed config: " + e.msg);
  }
  if (root.IsNull()) return {};
  if (!root.IsMap()) {
    throw ConfigError(path.string() + ":" + std::to_string(root.Mark().line + 1) + ": expected `key: value` lines");
  }
  std::vector<ConfigEntry> out;
  std::vector<std::string> unknown;
  const auto keys = setting_keys();
  for (const auto& kv : root) {
    const std::size_t line = static_cast<std::size_t>(kv.first.Mark().line + 1);
    const std::string key = kv.first.as<std::string>();
    std::string value;
    if (kv.second.IsScalar()) {
      value = kv.second.Scalar();
    } else if (kv.second.IsSequence()) {
      for (const auto& item : kv.second) {
        if (!item.IsScalar()) throw ConfigError(path.string() + ":" + std::to_string(line) + ": nested value for " + key);
        value += (value.empty() ? "" : ",") + item.Scalar();
      }
    } else {
      throw ConfigError(path.string() + ":" + std::to_string(line) + ": value of '" + key + "' must be a scalar or list");
    }
    if (std::none_of(keys.begin(), keys.end(), [&](const SettingInfo& k) { return k.key == key; })) {
      unknown.push_back(key);
      continue;
    }
    out.push_back({key, value, line});
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError(path.string() + ": unknown keys: " + list);
  }
  return out;
}

/// Defaults overlaid with the file's settings.
inline RunSettings load_config(const std::filesystem::path& path) {
  RunSettings s;
  for (const ConfigEntry& e : read_config_entries(path)) {
    try {
      apply_setting(s, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
  return s;
}

}  // namespace rgnn
