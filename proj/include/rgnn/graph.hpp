#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgnn/autodiff.hpp"
#include "rgnn/random.hpp"
#include "rgnn/tensor.hpp"

namespace rgnn {

using Edge = std::pair<std::size_t, std::size_t>;

/// One labelled undirected input graph. Each edge is stored once; the
/// neighbourhood of a node is derived symmetrically from the edge list.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  Tensor node_features;  // [num_nodes x Q]
  Tensor edge_features;  // [num_edges x P], P may be 0
  std::size_t label = 0;

  std::size_t num_edges() const { return edges.size(); }

  void validate() const {
    for (const auto& [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes) {
        throw std::invalid_argument("Graph: edge endpoint out of range");
      }
    }
    if (node_features.rows() != num_nodes || node_features.shape().size() != 2) {
      throw DimensionError("Graph: node feature rows != num_nodes");
    }
    if (edge_features.rows() != edges.size() || edge_features.shape().size() != 2) {
      throw DimensionError("Graph: edge feature rows != num_edges");
    }
  }

  friend bool operator==(const Graph&, const Graph&) = default;
};

struct GraphDataset {
  std::string name;
  std::vector<Graph> graphs;
  std::size_t num_classes = 0;
  std::size_t node_dim = 0;  // Q
  std::size_t edge_dim = 0;  // P

  // Original integer labels, in one-hot column order; empty when the
  // corresponding label file was absent.
  std::vector<std::int64_t> class_values;
  std::vector<std::int64_t> node_label_values;
  std::vector<std::int64_t> edge_label_values;

  std::size_t size() const { return graphs.size(); }

  void validate() const {
    for (const Graph& g : graphs) {
      g.validate();
      if (g.node_features.cols() != node_dim || g.edge_features.cols() != edge_dim) {
        throw DimensionError("GraphDataset: graphs disagree on feature dimensions");
      }
      if (g.label >= num_classes) throw std::invalid_argument("GraphDataset: label out of range");
    }
  }
};

struct DatasetStats {
  std::size_t graphs = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  std::size_t node_dim = 0;
  std::size_t edge_dim = 0;
  std::vector<std::size_t> class_counts;
};

inline DatasetStats dataset_stats(const GraphDataset& ds) {
  DatasetStats s;
  s.graphs = ds.size();
  s.node_dim = ds.node_dim;
  s.edge_dim = ds.edge_dim;
  s.class_counts.assign(ds.num_classes, 0);
  double nodes = 0.0, edges = 0.0;
  for (const Graph& g : ds.graphs) {
    nodes += static_cast<double>(g.num_nodes);
    edges += static_cast<double>(g.num_edges());
    ++s.class_counts[g.label];
  }
  if (s.graphs > 0) {
    s.mean_nodes = nodes / static_cast<double>(s.graphs);
    s.mean_edges = edges / static_cast<double>(s.graphs);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then train = floor(r0 * n), val = floor(r1 * n), test = rest.
inline Split split_dataset(const GraphDataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 3) throw std::invalid_argument("split_dataset: need at least 3 graphs, got " + std::to_string(n));
  for (double r : ratios) {
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("split_dataset: ratio outside [0, 1]");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: ratios must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::split);
  std::shuffle(order.begin(), order.end(), rng);

  const auto floor_of = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_train = floor_of(ratios[0]);
  const std::size_t n_val = std::min(floor_of(ratios[1]), n - n_train);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Disjoint union of several graphs. Node indices of graph i are shifted by
/// the total node count of graphs 0..i-1, so the union adjacency is
/// block-diagonal. Message lists hold one entry per direction of every edge.
struct Batch {
  std::size_t num_nodes = 0;
  std::size_t num_graphs = 0;
  Tensor node_features;
  Tensor edge_features;
  std::vector<Edge> edges;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> nodes_per_graph;
  std::vector<std::size_t> degree;

  Index graph_of_node;
  Index msg_src;   // u for message u -> v
  Index msg_dst;   // v
  Index msg_edge;  // undirected edge index carrying the message
  std::shared_ptr<const std::vector<double>> msg_norm;  // 1 / sqrt(d_v * d_u), d = max(deg, 1)

  std::size_t num_messages() const { return msg_src->size(); }
};

inline Batch batch_graphs(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("batch_graphs: no graphs");
  const std::size_t q = graphs.front()->node_features.cols();
  const std::size_t p = graphs.front()->edge_features.cols();
  Batch b;
  b.num_graphs = graphs.size();
  std::size_t total_nodes = 0, total_edges = 0;
  for (const Graph* g : graphs) {
    if (g->node_features.cols() != q || g->edge_features.cols() != p) {
      throw DimensionError("batch_graphs: graphs disagree on feature dimensions");
    }
    total_nodes += g->num_nodes;
    total_edges += g->num_edges();
  }
  b.num_nodes = total_nodes;
  b.node_features = Tensor::zeros(total_nodes, q);
  b.edge_features = Tensor::zeros(total_edges, p);
  b.edges.reserve(total_edges);
  std::vector<std::size_t> graph_of(total_nodes);
  std::vector<std::size_t> src, dst, eid;
  src.reserve(2 * total_edges);
  dst.reserve(2 * total_edges);
  eid.reserve(2 * total_edges);

  std::size_t node_offset = 0, edge_offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = *graphs[gi];
    std::copy(g.node_features.values().begin(), g.node_features.values().end(),
              b.node_features.values().begin() + static_cast<std::ptrdiff_t>(node_offset * q));
    std::copy(g.edge_features.values().begin(), g.edge_features.values().end(),
              b.edge_features.values().begin() + static_cast<std::ptrdiff_t>(edge_offset * p));
    std::fill(graph_of.begin() + static_cast<std::ptrdiff_t>(node_offset),
              graph_of.begin() + static_cast<std::ptrdiff_t>(node_offset + g.num_nodes), gi);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      const std::size_t u = g.edges[e].first + node_offset;
      const std::size_t v = g.edges[e].second + node_offset;
      b.edges.emplace_back(u, v);
      src.push_back(u);
      dst.push_back(v);
      eid.push_back(edge_offset + e);
      if (u != v) {
        src.push_back(v);
        dst.push_back(u);
        eid.push_back(edge_offset + e);
      }
    }
    b.labels.push_back(g.label);
    b.nodes_per_graph.push_back(g.num_nodes);
    node_offset += g.num_nodes;
    edge_offset += g.num_edges();
  }

  b.degree.assign(total_nodes, 0);
  for (std::size_t v : dst) ++b.degree[v];
  std::vector<double> norm(src.size());
  for (std::size_t m = 0; m < src.size(); ++m) {
    const double du = static_cast<double>(std::max<std::size_t>(b.degree[src[m]], 1));
    const double dv = static_cast<double>(std::max<std::size_t>(b.degree[dst[m]], 1));
    norm[m] = 1.0 / std::sqrt(du * dv);
  }
  b.graph_of_node = make_index(std::move(graph_of));
  b.msg_src = make_index(std::move(src));
  b.msg_dst = make_index(std::move(dst));
  b.msg_edge = make_index(std::move(eid));
  b.msg_norm = std::make_shared<const std::vector<double>>(std::move(norm));
  return b;
}

inline Batch batch_graphs(std::span<const Graph> graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return batch_graphs(ptrs);
}

inline Batch batch_graphs(const GraphDataset& ds, std::span<const std::size_t> indices) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&ds.graphs.at(i));
  return batch_graphs(ptrs);
}

}  // namespace rgnn
