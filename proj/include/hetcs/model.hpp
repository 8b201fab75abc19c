#pragma once

// Query-driven community membership network over a HIN.
//
// Two encoders share one graph structure: the heterogeneous encoder runs on
// type-projected node features and never sees the query; the query encoder
// starts from a one-hot query indicator and, from the second layer on,
// consumes the fused representation of the previous layer. Each layer
// aggregates neighbours with multi-head attention whose scores also depend
// on an edge vector (dataset edge features or a learned per-type embedding).
// A two-way attention fuses both views after every layer and an MLP with a
// sigmoid turns the last fused representation into membership probabilities.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hetcs/autodiff.hpp"
#include "hetcs/graph.hpp"

namespace hetcs {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 8;
  std::size_t unified_dim = 64;
  std::size_t edge_dim = 16;
  /// Hidden width of the probability head; 0 means `hidden`.
  std::size_t mlp_hidden = 0;
  double dropout = 0.5;
  double leaky_slope = 0.2;

  std::size_t head_width() const { return hidden / heads; }
  std::size_t mlp_width() const { return mlp_hidden == 0 ? hidden : mlp_hidden; }
  /// Throws std::invalid_argument on K < 1, L < 1 or hidden % heads != 0.
  void check() const;
};

/// Weights of one attention-aggregation layer. Matrices map column vectors
/// (out × in); the attention vectors hold all heads side by side.
struct EncoderLayerParams {
  ad::Matrix w;       // hidden × in
  ad::Matrix w_edge;  // hidden × edge_dim
  ad::Matrix a_dst;   // 1 × hidden, scores the aggregating node
  ad::Matrix a_src;   // 1 × hidden, scores the neighbour
  ad::Matrix a_edge;  // 1 × hidden, scores the edge vector
  ad::Matrix w_res;   // hidden × in
};

struct ModelParams {
  std::vector<ad::Matrix> projection;  // per node type: unified_dim × feature_dim
  ad::Matrix edge_embedding;           // num_edge_types × edge_dim
  std::vector<EncoderLayerParams> hetero;
  std::vector<EncoderLayerParams> query;
  std::vector<ad::Matrix> fuse_u;    // per layer 1 × hidden
  std::vector<ad::Matrix> fuse_u_q;  // per layer 1 × hidden
  ad::Matrix head_w1;                // mlp × hidden
  ad::Matrix head_b1;                // 1 × mlp
  ad::Matrix head_w2;                // 1 × mlp
  ad::Matrix head_b2;                // 1 × 1

  struct Named {
    std::string name;
    ad::Matrix* value;
  };
  /// Every tensor with a stable name, in a fixed order.
  std::vector<Named> named(const HeteroGraph& graph);
  struct ConstNamed {
    std::string name;
    const ad::Matrix* value;
  };
  std::vector<ConstNamed> named(const HeteroGraph& graph) const;
  std::vector<ad::Matrix*> tensors();
  std::vector<const ad::Matrix*> tensors() const;
};

/// Shapes every parameter from the config and the graph's type registries,
/// filled with zeros.
ModelParams zero_params(const ModelConfig& config, const HeteroGraph& graph);
/// Glorot-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero biases.
ModelParams init_params(const ModelConfig& config, const HeteroGraph& graph, std::uint64_t seed);
/// Throws std::invalid_argument if any shape disagrees with zero_params().
void check_shapes(const ModelParams& params, const ModelConfig& config, const HeteroGraph& graph);

/// Per-graph message layout shared by all layers and both encoders.
/// Messages are grouped by destination in ascending node order; within a
/// destination they follow HeteroGraph::neighbors().
struct MessageIndex {
  std::size_t num_nodes = 0;
  ad::IndexPtr src;  // neighbour j
  ad::IndexPtr dst;  // aggregating node i
  /// Row of the edge-vector table: edge type id for featureless types,
  /// num_edge_types + offset + edge id for featured ones.
  ad::IndexPtr edge_row;
  /// Stacked edge feature tables of featured types (rows × edge_dim), or empty.
  ad::Matrix edge_features;
  /// Global node id → row of the per-type concatenated projection output.
  ad::IndexPtr projection_order;
};

MessageIndex build_message_index(const HeteroGraph& graph, std::size_t edge_dim);

struct LayerVars {
  ad::Var w, w_edge, a_dst, a_src, a_edge, w_res;
};

struct ParamVars {
  std::vector<ad::Var> projection;
  ad::Var edge_embedding;
  std::vector<LayerVars> hetero, query;
  std::vector<ad::Var> fuse_u, fuse_u_q;
  ad::Var head_w1, head_b1, head_w2, head_b2;
  std::vector<ad::Var> all;  // same order as ModelParams::tensors()
};

/// Registers every parameter on the tape, reading values in place. With
/// `tracked` false the handles are constants (inference).
ParamVars bind(ad::Tape& tape, const ModelParams& params, bool tracked = true);

// ---- building blocks -------------------------------------------------------

/// Row v is W_{type(v)} · x[v]; rows in global node order.
ad::Var project_features(ad::Tape& tape, const HeteroGraph& graph, const MessageIndex& index,
                         const std::vector<ad::Var>& projection);
/// n × 1 one-hot column for q.
ad::Matrix query_indicator(const HeteroGraph& graph, NodeId q);

/// Per-message attention weights (messages × heads), softmax-normalised over
/// each destination's neighbourhood:
///   score = LeakyReLU(a_dstᵀ W h_i + a_srcᵀ W h_j + a_edgeᵀ W_e e_ij).
/// `z` is W h for all nodes, `edge_z` is W_e applied to the edge-vector table.
ad::Var edge_attention(ad::Var z, ad::Var edge_z, const LayerVars& layer, const MessageIndex& index,
                       std::size_t heads, double slope);

/// ELU(‖_k Σ_j α_ijk W_k h_j + W_r h_i). When `attention` is non-null it
/// receives the α handle.
ad::Var encoder_layer(ad::Var h_in, const LayerVars& layer, ad::Var edge_table, const MessageIndex& index,
                      std::size_t heads, double slope, ad::Var* attention = nullptr);

/// β·h + β_q·h_q with (β, β_q) = softmax(uᵀh, u_qᵀh_q) per node.
ad::Var fuse(ad::Var h, ad::Var h_q, ad::Var u, ad::Var u_q);

/// Edge-vector table: learned embeddings, followed by dataset edge features
/// when the graph has any.
ad::Var edge_table(ad::Tape& tape, const MessageIndex& index, ad::Var edge_embedding);

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

struct Forward {
  ad::Var probabilities;  // n × 1
  std::vector<ad::Var> hetero, query, fused;
  std::vector<ad::Var> hetero_attention, query_attention;
};

Forward forward(ad::Tape& tape, const ParamVars& params, const ModelConfig& config, const HeteroGraph& graph,
                const MessageIndex& index, NodeId q, const ForwardOptions& options = {});

/// Inference: membership probability of every node for query q.
std::vector<double> predict(const ModelParams& params, const ModelConfig& config, const HeteroGraph& graph,
                            const MessageIndex& index, NodeId q);

}  // namespace hetcs
