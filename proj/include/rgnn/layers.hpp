#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgnn/autodiff.hpp"
#include "rgnn/graph.hpp"
#include "rgnn/masked_linear.hpp"

namespace rgnn {

enum class Variant { gcn, gcne, gin, gine };
enum class Pooling { sum, mean };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::gcn: return "gcn";
    case Variant::gcne: return "gcne";
    case Variant::gin: return "gin";
    case Variant::gine: return "gine";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "gcn") return Variant::gcn;
  if (s == "gcne") return Variant::gcne;
  if (s == "gin") return Variant::gin;
  if (s == "gine") return Variant::gine;
  throw std::invalid_argument("unknown model variant '" + s + "' (expected gcn, gcne, gin, gine)");
}

inline bool is_gin_family(Variant v) { return v == Variant::gin || v == Variant::gine; }
inline bool wants_edges(Variant v) { return v == Variant::gcne || v == Variant::gine; }

struct ModelConfig {
  Variant variant = Variant::gine;
  std::size_t hidden_dim = 64;
  std::size_t blocks = 3;                 // K
  std::optional<Pooling> pooling;         // default: sum for GIN family, mean for GCN family

  Pooling readout_pooling() const {
    return pooling.value_or(is_gin_family(variant) ? Pooling::sum : Pooling::mean);
  }

  void validate() const {
    if (blocks < 1) throw std::invalid_argument("ModelConfig: need at least one message-passing block");
    if (hidden_dim < 1) throw std::invalid_argument("ModelConfig: hidden_dim must be >= 1");
  }
};

struct DatasetDims {
  std::size_t node_dim = 0;
  std::size_t edge_dim = 0;
  std::size_t num_classes = 0;
};

inline DatasetDims dims_of(const GraphDataset& ds) { return {ds.node_dim, ds.edge_dim, ds.num_classes}; }

/// Two-layer perceptron: second(relu(first(x))).
struct Mlp {
  MaskedLinear first;
  MaskedLinear second;
};

inline Mlp make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                    bool sparsity_target = false) {
  Mlp m;
  m.first = make_masked_linear(name + ".0", in, hidden, true, rng, sparsity_target);
  m.second = make_masked_linear(name + ".1", hidden, out, true, rng, sparsity_target);
  return m;
}

inline Var mlp_forward(const Var& x, const Mlp& m) {
  return masked_linear_forward(relu(masked_linear_forward(x, m.first)), m.second);
}

struct BatchNorm {
  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;
};

inline BatchNorm make_batch_norm(std::size_t features) {
  return {parameter(Tensor({features}, 1.0)), parameter(Tensor({features}, 0.0)), Tensor({features}, 0.0),
          Tensor({features}, 1.0)};
}

inline Var batch_norm_forward(const Var& x, BatchNorm& bn, bool train) {
  return batch_norm_1d(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, train);
}

/// GCN / GCNE message-passing block.
struct GcnBlock {
  MaskedLinear w_nodes;
  std::optional<MaskedLinear> w_edges;
  BatchNorm norm;
};

/// GIN / GINE message-passing block.
struct GinBlock {
  std::optional<Mlp> mlp3;  // edge update, absent without edge features
  Mlp mlp4;                 // node update
  Var eta;                  // learnable 1x1 self-weight offset
  BatchNorm norm;
};

struct GnnModel {
  ModelConfig config;
  DatasetDims dims;
  bool uses_edges = false;

  std::optional<Mlp> node_embed;  // MLP_1, GIN family only
  std::optional<Mlp> edge_embed;  // MLP_2, when edge features are used
  std::vector<GcnBlock> gcn_blocks;
  std::vector<GinBlock> gin_blocks;
  std::optional<MaskedLinear> head_linear;  // GCN family
  std::optional<Mlp> head_mlp;              // GIN family (MLP_out)

  /// Every weight matrix, in forward order.
  std::vector<MaskedLinear*> linear_layers() {
    std::vector<MaskedLinear*> out;
    auto add_mlp = [&](std::optional<Mlp>& m) {
      if (m) {
        out.push_back(&m->first);
        out.push_back(&m->second);
      }
    };
    add_mlp(node_embed);
    add_mlp(edge_embed);
    for (GcnBlock& b : gcn_blocks) {
      out.push_back(&b.w_nodes);
      if (b.w_edges) out.push_back(&*b.w_edges);
    }
    for (GinBlock& b : gin_blocks) {
      if (b.mlp3) {
        out.push_back(&b.mlp3->first);
        out.push_back(&b.mlp3->second);
      }
      out.push_back(&b.mlp4.first);
      out.push_back(&b.mlp4.second);
    }
    if (head_linear) out.push_back(&*head_linear);
    add_mlp(head_mlp);
    return out;
  }

  std::vector<const MaskedLinear*> linear_layers() const {
    auto layers = const_cast<GnnModel*>(this)->linear_layers();
    return {layers.begin(), layers.end()};
  }

  /// Layers eligible for ER masking and rewiring.
  std::vector<MaskedLinear*> sparsity_targets() {
    std::vector<MaskedLinear*> out;
    for (MaskedLinear* l : linear_layers())
      if (l->sparsity_target) out.push_back(l);
    return out;
  }

  std::vector<Var> parameters() {
    std::vector<Var> out;
    for (MaskedLinear* l : linear_layers()) {
      out.push_back(l->weight);
      if (l->has_bias()) out.push_back(l->bias);
    }
    for (GcnBlock& b : gcn_blocks) {
      out.push_back(b.norm.gamma);
      out.push_back(b.norm.beta);
    }
    for (GinBlock& b : gin_blocks) {
      out.push_back(b.eta);
      out.push_back(b.norm.gamma);
      out.push_back(b.norm.beta);
    }
    return out;
  }
};

/// Builds a model with dense (all-ones) masks. Initialisation consumes `rng`
/// in forward order, so a GINE built on edge-less data and a GIN built from
/// the same seed are identical.
inline GnnModel build_model(const ModelConfig& config, const DatasetDims& dims, Rng& rng) {
  config.validate();
  if (dims.num_classes < 1) throw std::invalid_argument("build_model: dataset has no classes");
  const std::size_t hid = config.hidden_dim;
  GnnModel m;
  m.config = config;
  m.dims = dims;
  m.uses_edges = wants_edges(config.variant) && dims.edge_dim > 0;

  if (is_gin_family(config.variant)) {
    m.node_embed = make_mlp("mlp1", dims.node_dim, hid, hid, rng);
    if (m.uses_edges) m.edge_embed = make_mlp("mlp2", dims.edge_dim, hid, hid, rng);
    for (std::size_t k = 0; k < config.blocks; ++k) {
      const std::string prefix = "block" + std::to_string(k);
      GinBlock b;
      if (m.uses_edges) b.mlp3 = make_mlp(prefix + ".mlp3", hid, hid, hid, rng, true);
      b.mlp4 = make_mlp(prefix + ".mlp4", hid, hid, hid, rng, true);
      b.eta = parameter(Tensor::scalar(0.0));
      b.norm = make_batch_norm(hid);
      m.gin_blocks.push_back(std::move(b));
    }
    m.head_mlp = make_mlp("mlp_out", hid, hid, dims.num_classes, rng);
  } else {
    if (m.uses_edges) m.edge_embed = make_mlp("mlp2", dims.edge_dim, hid, hid, rng);
    for (std::size_t k = 0; k < config.blocks; ++k) {
      const std::string prefix = "block" + std::to_string(k);
      GcnBlock b;
      const std::size_t in = k == 0 ? dims.node_dim : hid;
      b.w_nodes = make_masked_linear(prefix + ".w_nodes", in, hid, false, rng, true);
      if (m.uses_edges) b.w_edges = make_masked_linear(prefix + ".w_edges", hid, hid, false, rng, true);
      b.norm = make_batch_norm(hid);
      m.gcn_blocks.push_back(std::move(b));
    }
    m.head_linear = make_masked_linear("head", hid, dims.num_classes, true, rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

/// Node embeddings h and edge embeddings g after some block; g is undefined
/// when the model has no edge path.
struct Embeddings {
  Var h;
  Var g;
};

/// h_v = sum over neighbours u of F_u.
inline Tensor gcn_init(const Batch& b) {
  const Tensor& f = b.node_features;
  Tensor h = Tensor::zeros(b.num_nodes, f.cols());
  for (std::size_t m = 0; m < b.num_messages(); ++m) {
    const std::size_t u = (*b.msg_src)[m];
    const std::size_t v = (*b.msg_dst)[m];
    for (std::size_t c = 0; c < f.cols(); ++c) h(v, c) += f(u, c);
  }
  return h;
}

/// g' = W_edges g;  a_v = ReLU(sum_u [ W_nodes h_u / sqrt(d_v d_u) + g_(v,u) ]);  h' = BN(a).
inline Embeddings gcne_block(const Embeddings& in, const Batch& b, GcnBlock& block, bool train) {
  if (in.h.rows() != b.num_nodes) throw DimensionError("gcne_block: embedding rows != batch nodes");
  const Var projected = masked_linear_forward(in.h, block.w_nodes);
  Var msg = scale_rows(gather_rows(projected, b.msg_src), b.msg_norm);
  if (in.g.defined()) {
    if (in.g.rows() != b.edges.size()) throw DimensionError("gcne_block: edge embedding rows != batch edges");
    msg = add(msg, gather_rows(in.g, b.msg_edge));
  }
  const Var a = relu(scatter_add_rows(msg, b.msg_dst, b.num_nodes));
  Embeddings out;
  out.h = batch_norm_forward(a, block.norm, train);
  if (in.g.defined() && block.w_edges) out.g = masked_linear_forward(in.g, *block.w_edges);
  return out;
}

/// h_v = sum_u MLP_1(F_u);  g_e = MLP_2(F_e), or undefined without edge features.
inline Embeddings gine_init(const Batch& b, const GnnModel& model) {
  if (!model.node_embed) throw std::logic_error("gine_init: model has no node embedding MLP");
  const Var embedded = mlp_forward(constant(b.node_features), *model.node_embed);
  Embeddings out;
  out.h = scatter_add_rows(gather_rows(embedded, b.msg_src), b.msg_dst, b.num_nodes);
  if (model.edge_embed) out.g = mlp_forward(constant(b.edge_features), *model.edge_embed);
  return out;
}

/// g' = MLP_3(g);  a_v = sum_u ReLU(h_u + g_(v,u));  h' = BN(MLP_4((1 + eta) h_v + a_v)).
inline Embeddings gine_block(const Embeddings& in, const Batch& b, GinBlock& block, bool train) {
  Var msg = gather_rows(in.h, b.msg_src);
  if (in.g.defined()) msg = add(msg, gather_rows(in.g, b.msg_edge));
  const Var a = scatter_add_rows(relu(msg), b.msg_dst, b.num_nodes);
  const Var combined = add(scale_one_plus(in.h, block.eta), a);
  Embeddings out;
  out.h = batch_norm_forward(mlp_forward(combined, block.mlp4), block.norm, train);
  if (in.g.defined() && block.mlp3) out.g = mlp_forward(in.g, *block.mlp3);
  return out;
}

/// Per-graph SUM or MEAN of node embeddings -> [num_graphs x hidden].
inline Var readout(const Var& h, const Batch& b, Pooling pooling) {
  for (std::size_t g = 0; g < b.num_graphs; ++g) {
    if (b.nodes_per_graph[g] == 0) throw std::invalid_argument("readout: graph " + std::to_string(g) + " is empty");
  }
  Var pooled = scatter_add_rows(h, b.graph_of_node, b.num_graphs);
  if (pooling == Pooling::mean) {
    std::vector<double> inv(b.num_graphs);
    for (std::size_t g = 0; g < b.num_graphs; ++g) inv[g] = 1.0 / static_cast<double>(b.nodes_per_graph[g]);
    pooled = scale_rows(pooled, std::make_shared<const std::vector<double>>(std::move(inv)));
  }
  return pooled;
}

inline Var classify(const Var& graph_repr, const GnnModel& model) {
  if (model.head_mlp) return mlp_forward(graph_repr, *model.head_mlp);
  return masked_linear_forward(graph_repr, *model.head_linear);
}

struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;  // applied after each block in training mode
  Rng* rng = nullptr;    // required when dropout > 0 and train
};

/// init -> K blocks -> readout -> logits [num_graphs x num_classes].
inline Var model_forward(const Batch& b, GnnModel& model, const ForwardOptions& opt = {}) {
  if (b.node_features.cols() != model.dims.node_dim) {
    throw DimensionError("model_forward: batch has " + std::to_string(b.node_features.cols()) +
                         " node features, model expects " + std::to_string(model.dims.node_dim));
  }
  const bool drop = opt.train && opt.dropout > 0.0;
  if (drop && opt.rng == nullptr) throw std::invalid_argument("model_forward: dropout needs an rng");
  Embeddings emb;
  if (is_gin_family(model.config.variant)) {
    emb = gine_init(b, model);
    for (GinBlock& block : model.gin_blocks) {
      emb = gine_block(emb, b, block, opt.train);
      if (drop) emb.h = dropout(emb.h, opt.dropout, true, *opt.rng);
    }
  } else {
    emb.h = constant(gcn_init(b));
    if (model.edge_embed) emb.g = mlp_forward(constant(b.edge_features), *model.edge_embed);
    for (GcnBlock& block : model.gcn_blocks) {
      emb = gcne_block(emb, b, block, opt.train);
      if (drop) emb.h = dropout(emb.h, opt.dropout, true, *opt.rng);
    }
  }
  return classify(readout(emb.h, b, model.config.readout_pooling()), model);
}

}  // namespace rgnn
