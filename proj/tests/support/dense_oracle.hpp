#pragma once

// Plain-loop evaluation of a single graph through a model, reading the
// model's weights but none of its forward code. Batch norm uses running
// statistics, i.e. eval mode.

#include <cmath>
#include <vector>

#include "rgnn/layers.hpp"

namespace rgnn::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline Mat zeros(std::size_t rows, std::size_t cols) { return Mat(rows, std::vector<double>(cols, 0.0)); }

inline Mat linear(const Mat& x, const MaskedLinear& l) {
  const Tensor& w = l.weight.value();
  Mat y = zeros(x.size(), l.out_features());
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < l.out_features(); ++o) {
      double acc = l.has_bias() ? l.bias.value()[o] : 0.0;
      for (std::size_t i = 0; i < l.in_features(); ++i) acc += x[r][i] * w(o, i) * l.mask(o, i);
      y[r][o] = acc;
    }
  }
  return y;
}

inline Mat relu(Mat x) {
  for (auto& row : x)
    for (double& v : row) v = v > 0.0 ? v : 0.0;
  return x;
}

inline Mat mlp(const Mat& x, const Mlp& m) { return linear(relu(linear(x, m.first)), m.second); }

inline Mat bn_eval(Mat x, const BatchNorm& bn) {
  for (auto& row : x) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = (row[c] - bn.running_mean[c]) / std::sqrt(bn.running_var[c] + 1e-5) * bn.gamma.value()[c] +
               bn.beta.value()[c];
    }
  }
  return x;
}

struct Neighbour {
  std::size_t node;
  std::size_t edge;
};

inline std::vector<std::vector<Neighbour>> neighbours(const Graph& g) {
  std::vector<std::vector<Neighbour>> n(g.num_nodes);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    n[v].push_back({u, e});
    if (u != v) n[u].push_back({v, e});
  }
  return n;
}

/// Logits [1 x classes] for one graph.
inline std::vector<double> forward(const Graph& g, const GnnModel& model) {
  const auto nb = neighbours(g);
  const std::size_t n = g.num_nodes;
  const Mat f = to_mat(g.node_features);
  Mat h, e;
  const bool edges = model.edge_embed.has_value();
  if (edges) e = mlp(to_mat(g.edge_features), *model.edge_embed);

  if (is_gin_family(model.config.variant)) {
    const Mat emb = mlp(f, *model.node_embed);
    h = zeros(n, emb.empty() ? 0 : emb[0].size());
    for (std::size_t v = 0; v < n; ++v)
      for (const auto& [u, _] : nb[v])
        for (std::size_t c = 0; c < h[v].size(); ++c) h[v][c] += emb[u][c];
    for (const GinBlock& b : model.gin_blocks) {
      const double eta = b.eta.value().item();
      Mat comb = h;
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t c = 0; c < h[v].size(); ++c) {
          double a = 0.0;
          for (const auto& [u, eid] : nb[v]) {
            const double m = h[u][c] + (edges ? e[eid][c] : 0.0);
            a += m > 0.0 ? m : 0.0;
          }
          comb[v][c] = (1.0 + eta) * h[v][c] + a;
        }
      }
      h = bn_eval(mlp(comb, b.mlp4), b.norm);
      if (edges && b.mlp3) e = mlp(e, *b.mlp3);
    }
  } else {
    h = zeros(n, f.empty() ? 0 : f[0].size());
    for (std::size_t v = 0; v < n; ++v)
      for (const auto& [u, _] : nb[v])
        for (std::size_t c = 0; c < h[v].size(); ++c) h[v][c] += f[u][c];
    for (const GcnBlock& b : model.gcn_blocks) {
      const Mat wh = linear(h, b.w_nodes);
      Mat a = zeros(n, wh.empty() ? 0 : wh[0].size());
      for (std::size_t v = 0; v < n; ++v) {
        const double dv = std::max<double>(static_cast<double>(nb[v].size()), 1.0);
        for (const auto& [u, eid] : nb[v]) {
          const double du = std::max<double>(static_cast<double>(nb[u].size()), 1.0);
          for (std::size_t c = 0; c < a[v].size(); ++c)
            a[v][c] += wh[u][c] / std::sqrt(dv * du) + (edges ? e[eid][c] : 0.0);
        }
      }
      h = bn_eval(relu(a), b.norm);
      if (edges && b.w_edges) e = linear(e, *b.w_edges);
    }
  }

  Mat pooled = zeros(1, h.empty() ? 0 : h[0].size());
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < pooled[0].size(); ++c) pooled[0][c] += h[v][c];
  if (model.config.readout_pooling() == Pooling::mean)
    for (double& x : pooled[0]) x /= static_cast<double>(n);
  return model.head_mlp ? mlp(pooled, *model.head_mlp)[0] : linear(pooled, *model.head_linear)[0];
}

}  // namespace rgnn::oracle
