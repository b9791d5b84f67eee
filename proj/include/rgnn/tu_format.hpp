#pragma once

// Reader and writer for the TU graph-classification text format:
//   DS_A.txt               one "u, v" pair per line, 1-indexed global node ids
//   DS_graph_indicator.txt graph id (1-indexed) of node i on line i
//   DS_graph_labels.txt    class label of graph i on line i
//   DS_node_labels.txt     optional integer label per node
//   DS_edge_labels.txt     optional integer label per line of DS_A.txt

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rgnn/graph.hpp"

namespace rgnn {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace tu_detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::int64_t parse_int(std::string_view token, const std::string& file, std::size_t line) {
  token = trim(token);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    throw FormatError(file + ":" + std::to_string(line) + ": expected an integer, got '" +
                      std::string(token) + "'");
  }
  return value;
}

// Non-empty lines of a file, with their 1-based line numbers.
struct Lines {
  std::string file;
  std::vector<std::pair<std::size_t, std::string>> items;
};

inline std::optional<Lines> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Lines out;
  out.file = path.filename().string();
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    out.items.emplace_back(number, line);
  }
  return out;
}

inline Lines require_lines(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (!lines) throw FormatError("missing mandatory file " + path.filename().string() + " in " + path.parent_path().string());
  return *lines;
}

inline std::vector<std::int64_t> parse_column(const Lines& lines) {
  std::vector<std::int64_t> values;
  values.reserve(lines.items.size());
  for (const auto& [number, text] : lines.items) {
    const auto comma = text.find(',');
    values.push_back(parse_int(std::string_view(text).substr(0, comma), lines.file, number));
  }
  return values;
}

// Sorted distinct values, giving the one-hot column of each label.
inline std::vector<std::int64_t> distinct_sorted(const std::vector<std::int64_t>& values) {
  std::set<std::int64_t> s(values.begin(), values.end());
  return {s.begin(), s.end()};
}

inline std::size_t column_of(const std::vector<std::int64_t>& distinct, std::int64_t value) {
  return static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), value) - distinct.begin());
}

}  // namespace tu_detail

/// Parses `<dir>/<name>_*.txt` where name is the directory's last component.
inline GraphDataset parse_tu_dataset(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  using namespace tu_detail;
  const fs::path dir = directory.has_filename() ? directory : directory.parent_path();
  const std::string name = dir.filename().string();
  const auto file = [&](const char* suffix) { return dir / (name + suffix); };

  const Lines a_lines = require_lines(file("_A.txt"));
  const Lines ind_lines = require_lines(file("_graph_indicator.txt"));
  const Lines label_lines = require_lines(file("_graph_labels.txt"));
  const auto node_label_lines = read_lines(file("_node_labels.txt"));
  const auto edge_label_lines = read_lines(file("_edge_labels.txt"));

  const std::vector<std::int64_t> indicator = parse_column(ind_lines);
  const std::vector<std::int64_t> graph_labels = parse_column(label_lines);
  const std::size_t num_graphs = graph_labels.size();
  const std::size_t total_nodes = indicator.size();

  // global node id -> (graph, local id)
  std::vector<std::size_t> graph_of(total_nodes), local_of(total_nodes);
  std::vector<std::size_t> nodes_in(num_graphs, 0);
  for (std::size_t i = 0; i < total_nodes; ++i) {
    const std::int64_t g = indicator[i];
    if (g < 1 || static_cast<std::size_t>(g) > num_graphs) {
      throw FormatError(ind_lines.file + ":" + std::to_string(ind_lines.items[i].first) + ": graph id " +
                        std::to_string(g) + " outside [1, " + std::to_string(num_graphs) + "]");
    }
    graph_of[i] = static_cast<std::size_t>(g - 1);
    local_of[i] = nodes_in[graph_of[i]]++;
  }

  std::vector<std::int64_t> node_labels;
  if (node_label_lines) {
    node_labels = parse_column(*node_label_lines);
    if (node_labels.size() != total_nodes) {
      throw FormatError(node_label_lines->file + ": " + std::to_string(node_labels.size()) + " labels for " +
                        std::to_string(total_nodes) + " nodes");
    }
  }
  std::vector<std::int64_t> edge_labels;
  if (edge_label_lines) {
    edge_labels = parse_column(*edge_label_lines);
    if (edge_labels.size() != a_lines.items.size()) {
      throw FormatError(edge_label_lines->file + ": " + std::to_string(edge_labels.size()) + " labels for " +
                        std::to_string(a_lines.items.size()) + " adjacency lines");
    }
  }

  GraphDataset ds;
  ds.name = name;
  ds.class_values = distinct_sorted(graph_labels);
  ds.num_classes = ds.class_values.size();
  ds.node_label_values = distinct_sorted(node_labels);
  ds.edge_label_values = distinct_sorted(edge_labels);
  ds.node_dim = node_label_lines ? ds.node_label_values.size() : 1;
  ds.edge_dim = edge_label_lines ? ds.edge_label_values.size() : 0;

  ds.graphs.resize(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    Graph& graph = ds.graphs[g];
    graph.num_nodes = nodes_in[g];
    graph.label = column_of(ds.class_values, graph_labels[g]);
    graph.node_features = node_label_lines ? Tensor::zeros(nodes_in[g], ds.node_dim)
                                           : Tensor::filled(nodes_in[g], 1, 1.0);
  }
  if (node_label_lines) {
    for (std::size_t i = 0; i < total_nodes; ++i) {
      ds.graphs[graph_of[i]].node_features(local_of[i], column_of(ds.node_label_values, node_labels[i])) = 1.0;
    }
  }

  // Collapse (u, v) / (v, u) into one undirected edge; the first occurrence
  // fixes the edge's orientation and label.
  std::vector<std::set<Edge>> seen(num_graphs);
  std::vector<std::vector<std::int64_t>> labels_per_graph(num_graphs);
  for (std::size_t k = 0; k < a_lines.items.size(); ++k) {
    const auto& [number, text] = a_lines.items[k];
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
      throw FormatError(a_lines.file + ":" + std::to_string(number) + ": expected 'u, v'");
    }
    const std::int64_t u = parse_int(std::string_view(text).substr(0, comma), a_lines.file, number);
    const std::int64_t v = parse_int(std::string_view(text).substr(comma + 1), a_lines.file, number);
    for (std::int64_t id : {u, v}) {
      if (id < 1 || static_cast<std::size_t>(id) > total_nodes) {
        throw FormatError(a_lines.file + ":" + std::to_string(number) + ": node index " + std::to_string(id) +
                          " out of range [1, " + std::to_string(total_nodes) + "]");
      }
    }
    const std::size_t gu = graph_of[static_cast<std::size_t>(u - 1)];
    const std::size_t gv = graph_of[static_cast<std::size_t>(v - 1)];
    if (gu != gv) {
      throw FormatError(a_lines.file + ":" + std::to_string(number) + ": edge joins graphs " +
                        std::to_string(gu + 1) + " and " + std::to_string(gv + 1));
    }
    const std::size_t lu = local_of[static_cast<std::size_t>(u - 1)];
    const std::size_t lv = local_of[static_cast<std::size_t>(v - 1)];
    const Edge key{std::min(lu, lv), std::max(lu, lv)};
    if (!seen[gu].insert(key).second) continue;
    ds.graphs[gu].edges.emplace_back(lu, lv);
    if (edge_label_lines) labels_per_graph[gu].push_back(edge_labels[k]);
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    Graph& graph = ds.graphs[g];
    graph.edge_features = Tensor::zeros(graph.num_edges(), ds.edge_dim);
    for (std::size_t e = 0; e < labels_per_graph[g].size(); ++e) {
      graph.edge_features(e, column_of(ds.edge_label_values, labels_per_graph[g][e])) = 1.0;
    }
  }
  ds.validate();
  return ds;
}

/// Writes `ds` in TU format to `<directory>/<ds.name>_*.txt`, one line per
/// direction of every edge. Label files are written only when the dataset
/// carries their original values.
inline void write_tu_dataset(const GraphDataset& ds, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const auto open = [&](const char* suffix) {
    std::ofstream out(directory / (ds.name + suffix));
    if (!out) throw std::runtime_error("cannot write " + (directory / (ds.name + suffix)).string());
    return out;
  };
  const auto argmax_row = [](const Tensor& t, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < t.cols(); ++c)
      if (t(r, c) > t(r, best)) best = c;
    return best;
  };
  auto a = open("_A.txt");
  auto ind = open("_graph_indicator.txt");
  auto gl = open("_graph_labels.txt");
  std::optional<std::ofstream> nl, el;
  if (!ds.node_label_values.empty()) nl = open("_node_labels.txt");
  if (!ds.edge_label_values.empty()) el = open("_edge_labels.txt");

  std::size_t offset = 0;
  for (std::size_t g = 0; g < ds.size(); ++g) {
    const Graph& graph = ds.graphs[g];
    gl << ds.class_values.at(graph.label) << '\n';
    for (std::size_t v = 0; v < graph.num_nodes; ++v) {
      ind << g + 1 << '\n';
      if (nl) *nl << ds.node_label_values.at(argmax_row(graph.node_features, v)) << '\n';
    }
    for (std::size_t e = 0; e < graph.num_edges(); ++e) {
      const auto [u, v] = graph.edges[e];
      a << u + offset + 1 << ", " << v + offset + 1 << '\n';
      if (el) *el << ds.edge_label_values.at(argmax_row(graph.edge_features, e)) << '\n';
      if (u != v) {
        a << v + offset + 1 << ", " << u + offset + 1 << '\n';
        if (el) *el << ds.edge_label_values.at(argmax_row(graph.edge_features, e)) << '\n';
      }
    }
    offset += graph.num_nodes;
  }
}

}  // namespace rgnn
