#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "rgnn/format.hpp"
#include "rgnn/run_log.hpp"
#include "rgnn/trainer.hpp"

namespace rgnn {

struct SweepSpec {
  std::string dataset;
  TrainConfig base;
  std::vector<double> epsilons{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> zetas{0.0, 0.1, 0.3, 0.5, 0.7};
  std::vector<Mode> modes{Mode::fixed, Mode::adaptive};
  std::size_t n_seeds = 1;
  std::size_t jobs = 1;

  void validate() const {
    if (epsilons.empty() || zetas.empty() || modes.empty()) throw std::invalid_argument("sweep grids must be non-empty");
    for (double e : epsilons)
      if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("sweep epsilon " + format_double(e) + " outside [0, 1]");
    for (double z : zetas)
      if (!(z >= 0.0 && z <= 1.0)) throw std::invalid_argument("sweep zeta " + format_double(z) + " outside [0, 1]");
    if (n_seeds < 1) throw std::invalid_argument("sweep needs at least one seed");
    base.validate();
  }
};

struct SweepRecord {
  std::string dataset;
  std::string model;
  Mode mode = Mode::baseline;
  double epsilon = 0.0;
  double zeta = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double params_active = 0.0;
  std::size_t n_seeds = 0;

  bool operator==(const SweepRecord&) const = default;
};

inline auto cell_key(const SweepRecord& r) {
  return std::make_tuple(r.dataset, r.model, static_cast<int>(r.mode), r.epsilon, r.zeta);
}

/// dataset, model, mode (declaration order), epsilon, zeta.
inline void sort_records(std::vector<SweepRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const SweepRecord& a, const SweepRecord& b) { return cell_key(a) < cell_key(b); });
}

inline SweepRecord make_record(const std::string& dataset, const TrainConfig& c, const MultiSeedResult& r) {
  return {dataset,    to_string(c.model.variant), c.mode, c.epsilon, c.zeta, r.acc_mean, r.acc_std,
          r.params_active_mean, r.runs.size()};
}

inline std::filesystem::path run_log_path(const std::filesystem::path& root, const std::string& dataset,
                                          const std::string& model, Mode mode, double epsilon, double zeta,
                                          std::uint64_t seed) {
  return root / "runs" / dataset / model / to_string(mode) /
         ("eps" + format_double(epsilon) + "_zeta" + format_double(zeta)) / ("seed" + std::to_string(seed) + ".log");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kResultsHeader = "dataset,model,mode,epsilon,zeta,acc_mean,acc_std,params_active,n_seeds";
inline constexpr const char* kParamHeader = "dataset,model,epsilon,params_active";
inline constexpr const char* kZetaHeader = "dataset,model,mode,zeta,acc_mean";

inline void emit_csv(const std::vector<SweepRecord>& records, std::ostream& out) {
  out << kResultsHeader << '\n';
  for (const SweepRecord& r : records) {
    out << r.dataset << ',' << r.model << ',' << to_string(r.mode) << ',' << format_double(r.epsilon) << ','
        << format_double(r.zeta) << ',' << format_double(r.acc_mean) << ',' << format_double(r.acc_std) << ','
        << format_double(r.params_active) << ',' << r.n_seeds << '\n';
  }
}

/// Writes through a temporary file so a crash never leaves a torn CSV.
inline void write_text_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    body(out);
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void emit_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, [&](std::ostream& out) { emit_csv(records, out); });
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::vector<SweepRecord> read_csv(std::istream& in, const std::string& name = "csv") {
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw std::runtime_error(name + ":1: unexpected header '" + line + "'");
  std::vector<SweepRecord> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = name + ":" + std::to_string(number);
    if (f.size() != 9) throw std::runtime_error(where + ": expected 9 fields, got " + std::to_string(f.size()));
    try {
      out.push_back({f[0], f[1], parse_mode(f[2]), parse_double(f[3], "epsilon"), parse_double(f[4], "zeta"),
                     parse_double(f[5], "acc_mean"), parse_double(f[6], "acc_std"),
                     parse_double(f[7], "params_active"), static_cast<std::size_t>(parse_uint(f[8], "n_seeds"))});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<SweepRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// Derived tables
// ---------------------------------------------------------------------------

struct ZetaRow {
  std::string dataset;
  std::string model;
  Mode mode = Mode::baseline;
  double zeta = 0.0;
  double acc_mean = 0.0;
};

inline constexpr std::array<double, 4> kMarginalEpsilons{0.1, 0.3, 0.5, 0.7};

/// For every (dataset, model, mode) and zeta, the mean of the cell means over
/// epsilon in {0.1, 0.3, 0.5, 0.7}. Rows are in canonical order.
inline std::vector<ZetaRow> marginalize_zeta(const std::vector<SweepRecord>& records) {
  std::map<std::tuple<std::string, std::string, int, double, double>, double> cells;
  std::map<std::tuple<std::string, std::string, int, double>, ZetaRow> rows;
  for (const SweepRecord& r : records) {
    cells[cell_key(r)] = r.acc_mean;
    rows[{r.dataset, r.model, static_cast<int>(r.mode), r.zeta}] = {r.dataset, r.model, r.mode, r.zeta, 0.0};
  }
  std::vector<ZetaRow> out;
  for (auto& [key, row] : rows) {
    double sum = 0.0;
    for (double eps : kMarginalEpsilons) {
      const auto it = cells.find({row.dataset, row.model, static_cast<int>(row.mode), eps, row.zeta});
      if (it == cells.end()) {
        throw std::runtime_error("marginalize_zeta: missing cell " + row.dataset + "/" + row.model + "/" +
                                 to_string(row.mode) + " epsilon=" + format_double(eps) +
                                 " zeta=" + format_double(row.zeta));
      }
      sum += it->second;
    }
    row.acc_mean = sum / static_cast<double>(kMarginalEpsilons.size());
    out.push_back(row);
  }
  return out;
}

inline void emit_zeta_table(const std::vector<ZetaRow>& rows, std::ostream& out) {
  out << kZetaHeader << '\n';
  for (const ZetaRow& r : rows) {
    out << r.dataset << ',' << r.model << ',' << to_string(r.mode) << ',' << format_double(r.zeta) << ','
        << format_double(r.acc_mean) << '\n';
  }
}

struct ParamRow {
  std::string dataset;
  std::string model;
  double epsilon = 0.0;
  double params_active = 0.0;
};

/// Active parameter count per (dataset, model, epsilon), taken from the first
/// masked-mode cell in canonical order, else the first cell at that epsilon.
inline std::vector<ParamRow> param_table(std::vector<SweepRecord> records) {
  sort_records(records);
  std::map<std::tuple<std::string, std::string, double>, std::pair<bool, double>> chosen;
  for (const SweepRecord& r : records) {
    const auto key = std::make_tuple(r.dataset, r.model, r.epsilon);
    const bool masked = uses_masks(r.mode);
    auto it = chosen.find(key);
    if (it == chosen.end()) {
      chosen.emplace(key, std::make_pair(masked, r.params_active));
    } else if (masked && !it->second.first) {
      it->second = {true, r.params_active};
    }
  }
  std::vector<ParamRow> out;
  for (const auto& [key, v] : chosen) out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), v.second});
  return out;
}

inline void emit_param_table(const std::vector<ParamRow>& rows, std::ostream& out) {
  out << kParamHeader << '\n';
  for (const ParamRow& r : rows) {
    out << r.dataset << ',' << r.model << ',' << format_double(r.epsilon) << ',' << format_double(r.params_active)
        << '\n';
  }
}

/// results.csv, param_table.csv and, when the epsilon coverage allows it,
/// zeta_table.csv. Returns the reason the zeta table was skipped, if it was.
inline std::optional<std::string> write_tables(const std::vector<SweepRecord>& records,
                                               const std::filesystem::path& dir) {
  emit_csv(records, dir / "results.csv");
  write_text_file(dir / "param_table.csv", [&](std::ostream& out) { emit_param_table(param_table(records), out); });
  std::vector<SweepRecord> rewiring;
  for (const SweepRecord& r : records)
    if (r.mode == Mode::fixed || r.mode == Mode::adaptive) rewiring.push_back(r);
  try {
    const auto rows = marginalize_zeta(rewiring);
    write_text_file(dir / "zeta_table.csv", [&](std::ostream& out) { emit_zeta_table(rows, out); });
    return std::nullopt;
  } catch (const std::runtime_error& e) {
    return std::string(e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweep driver
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::optional<std::filesystem::path> csv_path;  // resumed from and rewritten after every cell
  std::optional<std::filesystem::path> log_root;  // per-seed run logs under <root>/runs/...
  std::function<void(const SweepRecord&, bool resumed)> on_cell;
};

inline std::vector<TrainConfig> sweep_cells(const SweepSpec& spec) {
  std::vector<Mode> modes = spec.modes;
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  std::vector<double> eps = spec.epsilons, zetas = spec.zetas;
  std::sort(eps.begin(), eps.end());
  std::sort(zetas.begin(), zetas.end());
  std::vector<TrainConfig> out;
  for (Mode m : modes) {
    for (double e : eps) {
      for (double z : zetas) {
        TrainConfig c = spec.base;
        c.mode = m;
        c.epsilon = e;
        c.zeta = z;
        out.push_back(c);
      }
    }
  }
  return out;
}

/// Every mode x epsilon x zeta cell through multi_seed_run. Cells already in
/// the CSV (same n_seeds) are skipped.
inline std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const GraphDataset& ds,
                                          const SweepOptions& options = {}) {
  spec.validate();
  std::vector<SweepRecord> records;
  if (options.csv_path && std::filesystem::exists(*options.csv_path)) records = read_csv(*options.csv_path);

  for (const TrainConfig& cell : sweep_cells(spec)) {
    SweepRecord probe{spec.dataset, to_string(cell.model.variant), cell.mode, cell.epsilon, cell.zeta};
    const auto done = std::find_if(records.begin(), records.end(), [&](const SweepRecord& r) {
      return cell_key(r) == cell_key(probe) && r.n_seeds == spec.n_seeds;
    });
    if (done != records.end()) {
      if (options.on_cell) options.on_cell(*done, true);
      continue;
    }
    ObserverFactory factory;
    if (options.log_root) {
      factory = [&, cell](std::uint64_t seed) -> std::unique_ptr<RunObserver> {
        return std::make_unique<RunLogger>(
            run_log_path(*options.log_root, spec.dataset, probe.model, cell.mode, cell.epsilon, cell.zeta, seed),
            spec.dataset);
      };
    }
    const SweepRecord rec = make_record(spec.dataset, cell, multi_seed_run(cell, ds, spec.n_seeds, spec.jobs, factory));
    std::erase_if(records, [&](const SweepRecord& r) { return cell_key(r) == cell_key(rec); });
    records.push_back(rec);
    sort_records(records);
    if (options.csv_path) emit_csv(records, *options.csv_path);
    if (options.on_cell) options.on_cell(rec, false);
  }
  sort_records(records);
  return records;
}

/// Rebuilds sweep records from the run logs under <root>/runs. Interrupted
/// runs (no result record) are ignored.
inline std::vector<SweepRecord> records_from_logs(const std::filesystem::path& root) {
  const std::filesystem::path runs = root / "runs";
  if (!std::filesystem::is_directory(runs)) throw std::runtime_error("no run logs under " + runs.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(runs))
    if (entry.is_regular_file() && entry.path().extension() == ".log") files.push_back(entry.path());

  std::map<std::tuple<std::string, std::string, int, double, double>, std::map<std::uint64_t, RunLogSummary>> cells;
  for (const auto& f : files) {
    const auto s = read_run_log(f);
    if (!s) continue;
    cells[{s->dataset, s->model, static_cast<int>(s->mode), s->epsilon, s->zeta}][s->seed] = *s;
  }
  std::vector<SweepRecord> out;
  for (const auto& [key, by_seed] : cells) {
    std::vector<RunResult> runs;
    for (const auto& [seed, s] : by_seed) {
      RunResult r;
      r.seed = seed;
      r.test_acc = s.test_acc;
      r.params.active = s.params_active;
      runs.push_back(r);
    }
    const MultiSeedResult agg = aggregate(std::move(runs));
    const RunLogSummary& first = by_seed.begin()->second;
    out.push_back({first.dataset, first.model, first.mode, first.epsilon, first.zeta, agg.acc_mean, agg.acc_std,
                   agg.params_active_mean, agg.runs.size()});
  }
  sort_records(out);
  return out;
}

}  // namespace rgnn
