#pragma once

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgnn/config.hpp"
#include "rgnn/experiments.hpp"
#include "rgnn/tu_format.hpp"

namespace rgnn {

namespace cli_detail {

/// A directory path, or a dataset name under $RGNN_DATA_DIR or ./data.
inline std::filesystem::path resolve_dataset(const std::string& spec) {
  namespace fs = std::filesystem;
  if (spec.empty()) throw ConfigError("--dataset is required");
  if (fs::is_directory(spec)) return spec;
  if (const char* env = std::getenv("RGNN_DATA_DIR"); env && fs::is_directory(fs::path(env) / spec)) {
    return fs::path(env) / spec;
  }
  if (fs::is_directory(fs::path("data") / spec)) return fs::path("data") / spec;
  throw std::runtime_error("dataset directory not found: " + spec);
}

inline void print_stats(const GraphDataset& ds, std::ostream& out) {
  const DatasetStats s = dataset_stats(ds);
  out << std::fixed << std::setprecision(2);
  out << "dataset     " << ds.name << '\n'
      << "graphs      " << s.graphs << '\n'
      << "mean nodes  " << s.mean_nodes << '\n'
      << "mean edges  " << s.mean_edges << '\n'
      << "node dim Q  " << s.node_dim << '\n'
      << "edge dim P  " << s.edge_dim << '\n'
      << "classes     " << ds.num_classes << '\n';
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (const Graph& g : ds.graphs) ++counts[g.label];
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    out << "  label " << ds.class_values.at(c) << ": " << counts[c] << " ("
        << 100.0 * static_cast<double>(counts[c]) / static_cast<double>(ds.size()) << "%)\n";
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

}  // namespace cli_detail

/// Entry point behind the `rgnn` executable. Returns 0 on success, 2 on a
/// usage or configuration error and 1 on any other failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sparse graph neural networks with adaptive rewiring"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // Flag values are kept as text and applied through the same setting table
  // as the config file, after it.
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;

  const auto add_common = [&](CLI::App* sub, const std::vector<std::string>& keys) {
    sub->add_option("--config", config_path, "config file of `key: value` lines");
    for (const auto& info : setting_keys()) {
      if (std::find(keys.begin(), keys.end(), info.key) == keys.end()) continue;
      std::string flag = "--" + info.key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      flag_options.emplace_back(info.key, sub->add_option(flag, flag_values[info.key], info.help));
    }
  };
  const std::vector<std::string> train_keys = {
      "dataset", "model",  "mode",    "zeta_mode",  "epsilon",    "zeta",  "zeta_init", "seeds",
      "seed",    "epochs", "out",     "jobs",       "lr",         "batch_size", "hidden_dim", "blocks",
      "pooling", "dropout", "patience", "zeta_min", "zeta_max",   "window", "rewire_patience", "min_delta",
      "mask_all"};
  std::vector<std::string> sweep_keys = train_keys;
  sweep_keys.insert(sweep_keys.end(), {"modes", "epsilons", "zetas"});

  CLI::App* parse_cmd = app.add_subcommand("parse", "Print statistics of a TU dataset");
  add_common(parse_cmd, {"dataset"});
  CLI::App* train_cmd = app.add_subcommand("train", "Train one configuration over one or more seeds");
  add_common(train_cmd, train_keys);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a mode x epsilon x zeta grid and write CSV tables");
  add_common(sweep_cmd, sweep_keys);
  CLI::App* report_cmd = app.add_subcommand("report", "Rebuild CSV tables from the run logs of a sweep");
  add_common(report_cmd, {"out"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  RunSettings settings;
  try {
    if (!config_path.empty()) settings = load_config(config_path);
    for (const auto& [key, opt] : flag_options)
      if (opt->count() > 0) apply_setting(settings, key, flag_values[key]);
    try {
      settings.train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    namespace fs = std::filesystem;
    if (parse_cmd->parsed()) {
      const GraphDataset ds = parse_tu_dataset(cli_detail::resolve_dataset(settings.dataset));
      cli_detail::print_stats(ds, out);
      return 0;
    }
    if (report_cmd->parsed()) {
      const auto records = records_from_logs(settings.out);
      const fs::path dir = fs::path(settings.out) / "report";
      const auto skipped = write_tables(records, dir);
      emit_csv(records, out);
      err << "wrote " << (dir / "results.csv").string() << " and " << (dir / "param_table.csv").string() << '\n';
      if (skipped) err << "zeta table skipped: " << *skipped << '\n';
      return 0;
    }

    const GraphDataset ds = parse_tu_dataset(cli_detail::resolve_dataset(settings.dataset));
    if (train_cmd->parsed()) {
      const TrainConfig& c = settings.train;
      const std::string model = to_string(c.model.variant);
      const ObserverFactory factory = [&](std::uint64_t seed) -> std::unique_ptr<RunObserver> {
        return std::make_unique<RunLogger>(
            run_log_path(settings.out, ds.name, model, c.mode, c.epsilon, c.zeta, seed), ds.name);
      };
      const MultiSeedResult r = multi_seed_run(c, ds, settings.seeds, settings.jobs, factory);
      for (const RunResult& run : r.runs) {
        const EpochMetrics& last = run.curve.back();
        out << "seed " << run.seed << ": epochs " << run.epochs_trained() << " best_epoch " << run.best_epoch
            << " val_acc " << format_double(run.best_val_acc) << " test_acc " << format_double(run.test_acc)
            << " train_acc " << format_double(last.train_acc) << " params_active " << run.params.active << '/'
            << run.params.total << '\n';
      }
      out << "test_acc mean " << format_double(r.acc_mean) << " std " << format_double(r.acc_std) << " over "
          << r.runs.size() << " seed(s)\n";
      out << "logs in " << (fs::path(settings.out) / "runs" / ds.name / model / to_string(c.mode)).string() << '\n';
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const SweepSpec spec = settings.sweep_spec(ds.name);
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
      }
      SweepOptions opt;
      opt.csv_path = fs::path(settings.out) / "results.csv";
      opt.log_root = fs::path(settings.out);
      opt.on_cell = [&](const SweepRecord& r, bool resumed) {
        out << (resumed ? "resumed " : "cell    ") << to_string(r.mode) << " eps " << format_double(r.epsilon)
            << " zeta " << format_double(r.zeta) << ": acc " << format_double(r.acc_mean) << " +- "
            << format_double(r.acc_std) << '\n';
      };
      const auto records = run_sweep(spec, ds, opt);
      const auto skipped = write_tables(records, settings.out);
      out << "wrote " << *opt.csv_path << '\n';
      if (skipped) out << "zeta table skipped: " << *skipped << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace rgnn
