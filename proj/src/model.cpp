#include "hetcs/model.hpp"

#include <cmath>
#include <stdexcept>

namespace hetcs {

using ad::Matrix;
using ad::Var;

void ModelConfig::check() const {
  if (layers < 1) throw std::invalid_argument("model: layers must be >= 1");
  if (heads < 1) throw std::invalid_argument("model: heads must be >= 1");
  if (hidden == 0 || hidden % heads != 0) {
    throw std::invalid_argument("model: hidden dim " + std::to_string(hidden) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (unified_dim == 0) throw std::invalid_argument("model: unified dim must be positive");
  if (edge_dim == 0) throw std::invalid_argument("model: edge dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model: dropout must be in [0, 1)");
}

namespace {

// Single source of truth for parameter order and names.
template <typename Params, typename F>
void visit(Params& p, const HeteroGraph* graph, F&& f) {
  for (std::size_t t = 0; t < p.projection.size(); ++t) {
    f(graph ? "proj." + graph->node_type(static_cast<NodeTypeId>(t)).name : std::string(), p.projection[t]);
  }
  f("edge_embedding", p.edge_embedding);
  auto layer = [&](const std::string& prefix, auto& l) {
    f(prefix + ".w", l.w);
    f(prefix + ".w_edge", l.w_edge);
    f(prefix + ".a_dst", l.a_dst);
    f(prefix + ".a_src", l.a_src);
    f(prefix + ".a_edge", l.a_edge);
    f(prefix + ".w_res", l.w_res);
  };
  for (std::size_t l = 0; l < p.hetero.size(); ++l) layer("hetero." + std::to_string(l), p.hetero[l]);
  for (std::size_t l = 0; l < p.query.size(); ++l) layer("query." + std::to_string(l), p.query[l]);
  for (std::size_t l = 0; l < p.fuse_u.size(); ++l) {
    f("fuse." + std::to_string(l) + ".u", p.fuse_u[l]);
    f("fuse." + std::to_string(l) + ".u_q", p.fuse_u_q[l]);
  }
  f("head.w1", p.head_w1);
  f("head.b1", p.head_b1);
  f("head.w2", p.head_w2);
  f("head.b2", p.head_b2);
}

}  // namespace

std::vector<ModelParams::Named> ModelParams::named(const HeteroGraph& graph) {
  std::vector<Named> out;
  visit(*this, &graph, [&](const std::string& name, Matrix& m) { out.push_back({name, &m}); });
  return out;
}

std::vector<ModelParams::ConstNamed> ModelParams::named(const HeteroGraph& graph) const {
  std::vector<ConstNamed> out;
  visit(*this, &graph, [&](const std::string& name, const Matrix& m) { out.push_back({name, &m}); });
  return out;
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out;
  visit(*this, nullptr, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  std::vector<const Matrix*> out;
  visit(*this, nullptr, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

ModelParams zero_params(const ModelConfig& config, const HeteroGraph& graph) {
  config.check();
  ModelParams p;
  for (const auto& nt : graph.node_types()) p.projection.emplace_back(config.unified_dim, nt.feature_dim);
  p.edge_embedding = Matrix(graph.num_edge_types(), config.edge_dim);
  const std::size_t d = config.hidden;
  auto layer = [&](std::size_t in) {
    return EncoderLayerParams{Matrix(d, in), Matrix(d, config.edge_dim), Matrix(1, d),
                              Matrix(1, d), Matrix(1, d), Matrix(d, in)};
  };
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.hetero.push_back(layer(l == 0 ? config.unified_dim : d));
    p.query.push_back(layer(l == 0 ? 1 : d));
    p.fuse_u.emplace_back(1, d);
    p.fuse_u_q.emplace_back(1, d);
  }
  const std::size_t m = config.mlp_width();
  p.head_w1 = Matrix(m, d);
  p.head_b1 = Matrix(1, m);
  p.head_w2 = Matrix(1, m);
  p.head_b2 = Matrix(1, 1);
  return p;
}

ModelParams init_params(const ModelConfig& config, const HeteroGraph& graph, std::uint64_t seed) {
  ModelParams p = zero_params(config, graph);
  std::mt19937_64 rng(seed);
  auto glorot = [&](Matrix& m) {
    if (m.size() == 0) return;
    const double s = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    std::uniform_real_distribution<double> dist(-s, s);
    for (double& v : m.data) v = dist(rng);
  };
  visit(p, nullptr, [&](const std::string&, Matrix& m) {
    if (&m != &p.head_b1 && &m != &p.head_b2) glorot(m);
  });
  return p;
}

void check_shapes(const ModelParams& params, const ModelConfig& config, const HeteroGraph& graph) {
  ModelParams expected = zero_params(config, graph);
  auto want = expected.named(graph);
  auto have = params.tensors();
  if (want.size() != have.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(want.size()) + " parameter tensors, got " +
                                std::to_string(have.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!want[i].value->same_shape(*have[i])) {
      throw std::invalid_argument("model: parameter '" + want[i].name + "' has shape " + have[i]->shape_str() +
                                  ", expected " + want[i].value->shape_str());
    }
  }
}

MessageIndex build_message_index(const HeteroGraph& graph, std::size_t edge_dim) {
  MessageIndex index;
  const std::size_t n = graph.num_nodes();
  index.num_nodes = n;
  const auto num_types = static_cast<std::int32_t>(graph.num_edge_types());

  // Feature tables of featured declared types, stacked after the embeddings.
  std::vector<std::int64_t> feature_offset(graph.num_edge_types(), -1);
  std::vector<double> stacked;
  std::int64_t rows = 0;
  for (std::size_t r = 0; r < graph.num_edge_types(); ++r) {
    const auto& et = graph.edge_type(static_cast<EdgeTypeId>(r));
    if (et.feature_dim == 0 || et.is_inverse()) continue;
    if (et.feature_dim != edge_dim) {
      throw std::invalid_argument("model: edge type '" + et.name + "' has " + std::to_string(et.feature_dim) +
                                  " features but the model edge dim is " + std::to_string(edge_dim));
    }
    const Matrix* table = graph.edge_features(static_cast<EdgeTypeId>(r));
    feature_offset[r] = rows;
    stacked.insert(stacked.end(), table->data.begin(), table->data.end());
    rows += static_cast<std::int64_t>(table->rows);
  }
  for (std::size_t r = 0; r < graph.num_edge_types(); ++r) {
    const auto& et = graph.edge_type(static_cast<EdgeTypeId>(r));
    if (et.is_inverse()) feature_offset[r] = feature_offset[static_cast<std::size_t>(et.inverse_of)];
  }
  if (rows > 0) index.edge_features = Matrix(static_cast<std::size_t>(rows), edge_dim, std::move(stacked));

  ad::Index src, dst, edge_row;
  const std::size_t m = graph.num_edges();
  src.reserve(m);
  dst.reserve(m);
  edge_row.reserve(m);
  for (std::size_t v = 0; v < n; ++v) {
    graph.for_each_neighbor(static_cast<NodeId>(v), [&](NodeId u, EdgeTypeId r, std::int64_t e) {
      src.push_back(u);
      dst.push_back(static_cast<std::int32_t>(v));
      const std::int64_t off = feature_offset[static_cast<std::size_t>(r)];
      edge_row.push_back(off < 0 ? r : static_cast<std::int32_t>(num_types + off + e));
    });
  }
  index.src = ad::make_index(std::move(src));
  index.dst = ad::make_index(std::move(dst));
  index.edge_row = ad::make_index(std::move(edge_row));

  ad::Index order(n);
  std::vector<std::int32_t> type_offset(graph.num_node_types() + 1, 0);
  for (std::size_t t = 0; t < graph.num_node_types(); ++t) {
    type_offset[t + 1] = type_offset[t] + static_cast<std::int32_t>(graph.nodes_of_type(static_cast<NodeTypeId>(t)).size());
  }
  for (std::size_t v = 0; v < n; ++v) {
    const auto t = static_cast<std::size_t>(graph.type_of(static_cast<NodeId>(v)));
    order[v] = type_offset[t] + static_cast<std::int32_t>(graph.index_in_type(static_cast<NodeId>(v)));
  }
  index.projection_order = ad::make_index(std::move(order));
  return index;
}

ParamVars bind(ad::Tape& tape, const ModelParams& params, bool tracked) {
  ParamVars v;
  auto handle = [&](const Matrix& m) {
    Var x = tracked ? tape.parameter(m) : tape.constant_view(m);
    v.all.push_back(x);
    return x;
  };
  for (const auto& m : params.projection) v.projection.push_back(handle(m));
  v.edge_embedding = handle(params.edge_embedding);
  auto layer = [&](const EncoderLayerParams& l) {
    LayerVars lv;
    lv.w = handle(l.w);
    lv.w_edge = handle(l.w_edge);
    lv.a_dst = handle(l.a_dst);
    lv.a_src = handle(l.a_src);
    lv.a_edge = handle(l.a_edge);
    lv.w_res = handle(l.w_res);
    return lv;
  };
  for (const auto& l : params.hetero) v.hetero.push_back(layer(l));
  for (const auto& l : params.query) v.query.push_back(layer(l));
  for (std::size_t l = 0; l < params.fuse_u.size(); ++l) {
    v.fuse_u.push_back(handle(params.fuse_u[l]));
    v.fuse_u_q.push_back(handle(params.fuse_u_q[l]));
  }
  v.head_w1 = handle(params.head_w1);
  v.head_b1 = handle(params.head_b1);
  v.head_w2 = handle(params.head_w2);
  v.head_b2 = handle(params.head_b2);
  return v;
}

Var project_features(ad::Tape& tape, const HeteroGraph& graph, const MessageIndex& index,
                     const std::vector<Var>& projection) {
  if (projection.size() != graph.num_node_types()) {
    throw std::invalid_argument("project_features: " + std::to_string(projection.size()) +
                                " projections for " + std::to_string(graph.num_node_types()) + " node types");
  }
  std::vector<Var> parts;
  for (std::size_t t = 0; t < graph.num_node_types(); ++t) {
    const Matrix& x = graph.features(static_cast<NodeTypeId>(t));
    if (x.rows == 0) continue;
    parts.push_back(ad::linear(tape.constant_view(x), projection[t]));
  }
  if (parts.empty()) return tape.constant(Matrix(0, projection.front().rows()));
  return ad::gather_rows(ad::concat_rows(parts), index.projection_order);
}

Matrix query_indicator(const HeteroGraph& graph, NodeId q) {
  if (q < 0 || static_cast<std::size_t>(q) >= graph.num_nodes()) {
    throw GraphError("query node " + std::to_string(q) + " out of range");
  }
  Matrix x(graph.num_nodes(), 1);
  x.data[static_cast<std::size_t>(q)] = 1.0;
  return x;
}

Var edge_table(ad::Tape& tape, const MessageIndex& index, Var edge_embedding) {
  if (index.edge_features.size() == 0) return edge_embedding;
  return ad::concat_rows({edge_embedding, tape.constant_view(index.edge_features)});
}

Var edge_attention(Var z, Var edge_z, const LayerVars& layer, const MessageIndex& index, std::size_t heads,
                   double slope) {
  const Var s_dst = ad::grouped_row_dot(z, layer.a_dst, heads);
  const Var s_src = ad::grouped_row_dot(z, layer.a_src, heads);
  const Var s_edge = ad::grouped_row_dot(edge_z, layer.a_edge, heads);
  return ad::edge_softmax(s_dst, s_src, s_edge, index.dst, index.src, index.edge_row, index.num_nodes, slope);
}

Var encoder_layer(Var h_in, const LayerVars& layer, Var edge_tab, const MessageIndex& index, std::size_t heads,
                  double slope, Var* attention) {
  if (h_in.rows() != index.num_nodes) {
    throw ad::ShapeError("encoder_layer: " + std::to_string(h_in.rows()) + " input rows for " +
                         std::to_string(index.num_nodes) + " nodes");
  }
  const Var z = ad::linear(h_in, layer.w);
  const Var edge_z = ad::linear(edge_tab, layer.w_edge);
  const Var alpha = edge_attention(z, edge_z, layer, index, heads, slope);
  if (attention) *attention = alpha;
  const Var agg = ad::edge_aggregate(alpha, z, index.src, index.dst, index.num_nodes);
  const Var out = ad::elu(ad::add(agg, ad::linear(h_in, layer.w_res)));
  for (double v : out.value().data) {
    if (!std::isfinite(v)) throw std::domain_error("encoder_layer: non-finite activation");
  }
  return out;
}

Var fuse(Var h, Var h_q, Var u, Var u_q) {
  if (!h.value().same_shape(h_q.value())) {
    throw ad::ShapeError("fuse: " + h.value().shape_str() + " vs " + h_q.value().shape_str());
  }
  const Var e = ad::grouped_row_dot(h, u, 1);
  const Var e_q = ad::grouped_row_dot(h_q, u_q, 1);
  // Two-way softmax: β = σ(e − e_q), β_q = σ(e_q − e).
  const Var beta = ad::sigmoid(ad::sub(e, e_q));
  const Var beta_q = ad::sigmoid(ad::sub(e_q, e));
  return ad::add(ad::scale_rows(h, beta), ad::scale_rows(h_q, beta_q));
}

Forward forward(ad::Tape& tape, const ParamVars& params, const ModelConfig& config, const HeteroGraph& graph,
                const MessageIndex& index, NodeId q, const ForwardOptions& options) {
  const bool drop = options.training && config.dropout > 0.0;
  if (drop && options.rng == nullptr) throw std::invalid_argument("forward: dropout needs an RNG");
  auto maybe_drop = [&](Var x) { return drop ? ad::dropout(x, config.dropout, *options.rng) : x; };

  Forward out;
  const Var edges = edge_table(tape, index, params.edge_embedding);
  Var h = project_features(tape, graph, index, params.projection);
  Var h_q = tape.constant(query_indicator(graph, q));
  Var fused;
  for (std::size_t l = 0; l < config.layers; ++l) {
    Var att_h, att_q;
    h = encoder_layer(maybe_drop(h), params.hetero[l], edges, index, config.heads, config.leaky_slope, &att_h);
    // The raw indicator is never dropped; later query layers read the fused view.
    const Var q_in = l == 0 ? h_q : maybe_drop(fused);
    h_q = encoder_layer(q_in, params.query[l], edges, index, config.heads, config.leaky_slope, &att_q);
    fused = fuse(h, h_q, params.fuse_u[l], params.fuse_u_q[l]);
    out.hetero.push_back(h);
    out.query.push_back(h_q);
    out.fused.push_back(fused);
    out.hetero_attention.push_back(att_h);
    out.query_attention.push_back(att_q);
  }
  const Var hidden = ad::elu(ad::add_row(ad::linear(fused, params.head_w1), params.head_b1));
  const Var logit = ad::add_row(ad::linear(hidden, params.head_w2), params.head_b2);
  out.probabilities = ad::sigmoid(logit);
  for (double p : out.probabilities.value().data) {
    if (!std::isfinite(p)) throw std::domain_error("forward: non-finite probability");
  }
  return out;
}

std::vector<double> predict(const ModelParams& params, const ModelConfig& config, const HeteroGraph& graph,
                            const MessageIndex& index, NodeId q) {
  ad::Tape tape;
  const ParamVars vars = bind(tape, params, false);
  const Forward f = forward(tape, vars, config, graph, index, q);
  return f.probabilities.value().data;
}

}  // namespace hetcs
