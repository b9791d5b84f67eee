#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "rgnn/graph.hpp"
#include "rgnn/random.hpp"

namespace rgnn::oracle {

/// Random simple graph with one-hot node labels (q values) and edge labels
/// (p values, p = 0 for none).
inline Graph random_graph(std::size_t n, double edge_prob, std::size_t q, std::size_t p, Rng& rng,
                          std::size_t num_classes = 2) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Graph g;
  g.num_nodes = n;
  g.node_features = Tensor::zeros(n, q);
  for (std::size_t v = 0; v < n; ++v) g.node_features(v, std::uniform_int_distribution<std::size_t>(0, q - 1)(rng)) = 1.0;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (unif(rng) < edge_prob) g.edges.emplace_back(u, v);
  g.edge_features = Tensor::zeros(g.edges.size(), p);
  if (p > 0)
    for (std::size_t e = 0; e < g.edges.size(); ++e)
      g.edge_features(e, std::uniform_int_distribution<std::size_t>(0, p - 1)(rng)) = 1.0;
  g.label = std::uniform_int_distribution<std::size_t>(0, num_classes - 1)(rng);
  return g;
}

/// Relabels node v as perm[v], carrying features along; edges keep their
/// order and labels.
inline Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out = g;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    for (std::size_t c = 0; c < g.node_features.cols(); ++c) out.node_features(perm[v], c) = g.node_features(v, c);
  for (auto& [u, v] : out.edges) {
    u = perm[u];
    v = perm[v];
  }
  return out;
}

/// Same graph with the edge list reversed and every edge flipped.
inline Graph reorder_edges(const Graph& g) {
  Graph out = g;
  const std::size_t m = g.edges.size();
  for (std::size_t e = 0; e < m; ++e) {
    out.edges[e] = {g.edges[m - 1 - e].second, g.edges[m - 1 - e].first};
    for (std::size_t c = 0; c < g.edge_features.cols(); ++c) out.edge_features(e, c) = g.edge_features(m - 1 - e, c);
  }
  return out;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace rgnn::oracle
