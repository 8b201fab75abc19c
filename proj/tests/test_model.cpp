#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "hetcs/checkpoint.hpp"
#include "hetcs/gradcheck.hpp"
#include "hetcs/model.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace hetcs;
using ad::Matrix;
using ad::Var;
using namespace oracles;

namespace {

ModelConfig small_config(std::size_t heads = 2) {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 4;
  c.heads = heads;
  c.unified_dim = 3;
  c.edge_dim = 2;
  c.mlp_hidden = 3;
  c.dropout = 0.0;
  return c;
}

Forward run(ad::Tape& tape, const ModelParams& p, const ModelConfig& c, const HeteroGraph& g,
            const MessageIndex& idx, NodeId q) {
  return forward(tape, bind(tape, p, false), c, g, idx, q);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.check());
  c.hidden = 10;
  c.heads = 3;
  CHECK_THROWS_AS(c.check(), std::invalid_argument);
  c = ModelConfig{};
  c.heads = 0;
  CHECK_THROWS_AS(c.check(), std::invalid_argument);
  c = ModelConfig{};
  c.layers = 0;
  CHECK_THROWS_AS(c.check(), std::invalid_argument);
}

TEST_CASE("project_features examples") {
  GraphSchema s;
  s.node_types = {{"a", 2}, {"b", 2}};
  s.edge_types = {{"r", "a", "b", 0}};
  HeteroGraph g = HeteroGraph::build(
      s, {{"a", {0}, Matrix::from_rows({{1, 1}})}, {"b", {1}, Matrix::from_rows({{0, 0}})}}, {});
  ModelConfig c = small_config();
  c.unified_dim = 2;
  ModelParams p = zero_params(c, g);
  p.projection[0] = Matrix::from_rows({{1, 2}, {3, 4}});
  p.projection[1] = Matrix::from_rows({{1, 2}, {3, 4}});
  MessageIndex idx = build_message_index(g, c.edge_dim);
  ad::Tape t;
  ParamVars v = bind(t, p, false);
  Var out = project_features(t, g, idx, v.projection);
  CHECK(out.value().data == std::vector<double>{3, 7, 0, 0});

  p.projection[0] = Matrix::from_rows({{1, 0}, {0, 1}});
  ad::Tape t2;
  ParamVars v2 = bind(t2, p, false);
  CHECK(project_features(t2, g, idx, v2.projection).value().row(0)[1] == 1.0);
}

TEST_CASE("query_indicator") {
  HeteroGraph g = toys::plain_graph(3, {{0, 1}});
  CHECK(query_indicator(g, 1).data == std::vector<double>{0, 1, 0});
  const auto a = query_indicator(g, 0).data, b = query_indicator(g, 2).data;
  CHECK(std::accumulate(a.begin(), a.end(), 0.0) == 1.0);
  int diff = 0;
  for (std::size_t i = 0; i < 3; ++i) diff += a[i] != b[i];
  CHECK(diff == 2);
  CHECK_THROWS(query_indicator(g, 3));
}

TEST_CASE("edge_attention examples") {
  // Node 0 has neighbours 1 and 2 with identical features; node 3 only sees 0.
  HeteroGraph g = toys::plain_graph(4, {{0, 1}, {0, 2}, {3, 0}});
  ModelConfig c = small_config(1);
  std::mt19937_64 rng(3);
  ModelParams p = init_params(c, g, 3);
  MessageIndex idx = build_message_index(g, c.edge_dim);
  ad::Tape t;
  ParamVars v = bind(t, p, false);
  Var h = project_features(t, g, idx, v.projection);
  Var edges = edge_table(t, idx, v.edge_embedding);
  Var alpha;
  encoder_layer(h, v.hetero[0], edges, idx, 1, 0.2, &alpha);
  // Messages are grouped by destination following neighbors().
  const auto& dst = *idx.dst;
  const auto& src = *idx.src;
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] == 3) CHECK(alpha.value()(e, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  // Neighbours 1 and 2 of node 0 arrive through the same edge type "e".
  double a1 = -1, a2 = -1;
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] == 0 && src[e] == 1) a1 = alpha.value()(e, 0);
    if (dst[e] == 0 && src[e] == 2) a2 = alpha.value()(e, 0);
  }
  CHECK(a1 == doctest::Approx(a2).epsilon(1e-12));

  p.hetero[0].a_dst = Matrix(1, c.hidden);
  p.hetero[0].a_src = Matrix(1, c.hidden);
  p.hetero[0].a_edge = Matrix(1, c.hidden);
  ad::Tape t2;
  ParamVars v2 = bind(t2, p, false);
  Var alpha2;
  encoder_layer(project_features(t2, g, idx, v2.projection), v2.hetero[0], edge_table(t2, idx, v2.edge_embedding),
                idx, 1, 0.2, &alpha2);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    const double deg = static_cast<double>(g.degree(dst[e]));
    CHECK(alpha2.value()(e, 0) == doctest::Approx(1.0 / deg).epsilon(1e-14));
  }
}

TEST_CASE("encoder_layer without edges is ELU of the residual") {
  GraphSchema s;
  s.node_types = {{"a", 2}, {"b", 1}};
  s.edge_types = {{"r", "a", "b", 0}};
  HeteroGraph g = HeteroGraph::build(
      s, {{"a", {0, 1}, Matrix::from_rows({{1, -2}, {0.5, 3}})}, {"b", {2}, Matrix::from_rows({{1}})}}, {});
  ModelConfig c = small_config();
  ModelParams p = init_params(c, g, 11);
  MessageIndex idx = build_message_index(g, c.edge_dim);
  ad::Tape t;
  ParamVars v = bind(t, p, false);
  Var h = project_features(t, g, idx, v.projection);
  Var out = encoder_layer(h, v.hetero[0], edge_table(t, idx, v.edge_embedding), idx, c.heads, 0.2);
  for (std::size_t i = 0; i < 3; ++i) {
    auto hi = h.value().row(i);
    auto res = matvec(p.hetero[0].w_res, std::vector<double>(hi.begin(), hi.end()));
    for (std::size_t k = 0; k < c.hidden; ++k) CHECK(out.value()(i, k) == elu(res[k]));
  }

  ModelParams zero = zero_params(c, g);
  ad::Tape t2;
  ParamVars z = bind(t2, zero, false);
  Var zout = encoder_layer(project_features(t2, g, idx, z.projection), z.hetero[0], edge_table(t2, idx, z.edge_embedding),
                           idx, c.heads, 0.2);
  for (double x : zout.value().data) CHECK(x == 0.0);
}

TEST_CASE("fuse examples") {
  ad::Tape t;
  Var h = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  Var hq = t.constant(Matrix::from_rows({{5, 6}, {7, 8}}));
  Var zero = t.constant(Matrix(1, 2));
  CHECK(fuse(h, hq, zero, zero).value().data == std::vector<double>{3, 4, 5, 6});

  Var u = t.constant(Matrix::from_rows({{0.3, -1.2}}));
  Var uq = t.constant(Matrix::from_rows({{2.0, 0.7}}));
  auto same = fuse(h, h, u, uq).value().data;
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == doctest::Approx(h.value().data[i]).epsilon(1e-15));

  // e − e_q = ln 3 with e = ln3 · h0, e_q = 0.
  Var h1 = t.constant(Matrix::from_rows({{1, 0}}));
  Var hq1 = t.constant(Matrix::from_rows({{0, 4}}));
  Var ul = t.constant(Matrix::from_rows({{std::log(3.0), 0}}));
  Var uq0 = t.constant(Matrix(1, 2));
  auto f = fuse(h1, hq1, ul, uq0).value().data;
  CHECK(f[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(0.25 * 4).epsilon(1e-14));
  CHECK_THROWS_AS(fuse(h, h1, u, uq), ad::ShapeError);
}

TEST_CASE("zero parameters predict one half") {
  std::mt19937_64 rng(1);
  HeteroGraph g = toys::random_graph(rng, {});
  ModelConfig c = small_config();
  ModelParams p = zero_params(c, g);
  MessageIndex idx = build_message_index(g, c.edge_dim);
  for (double x : predict(p, c, g, idx, 0)) CHECK(x == 0.5);
}

TEST_CASE("dense oracle equivalence") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    toys::ToySpec spec;
    spec.nodes = 8 + static_cast<std::size_t>(trial) * 2;
    spec.edges = 20 + static_cast<std::size_t>(trial) * 4;
    spec.edge_feature_dim = trial % 2 == 0 ? 2 : 0;
    HeteroGraph g = toys::random_graph(rng, spec);
    ModelConfig c = small_config(trial % 3 == 0 ? 1 : 2);
    c.unified_dim = 3;
    ModelParams p = init_params(c, g, 100 + static_cast<std::uint64_t>(trial));
    MessageIndex idx = build_message_index(g, c.edge_dim);
    const NodeId q = static_cast<NodeId>(trial) % static_cast<NodeId>(g.num_nodes());
    ad::Tape t;
    Forward f = run(t, p, c, g, idx, q);
    DenseForward d = dense_forward(g, p, c, q);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      CHECK(std::abs(f.probabilities.value().data[v] - d.probabilities[v]) < 1e-10);
      for (std::size_t l = 0; l < c.layers; ++l)
        for (std::size_t k = 0; k < c.hidden; ++k) CHECK(std::abs(f.hetero[l].value()(v, k) - d.hetero[l][v][k]) < 1e-10);
    }
    // Attention rows: sums are one and entries match the dense matrices.
    for (std::size_t l = 0; l < c.layers; ++l) {
      const Matrix& a = f.hetero_attention[l].value();
      std::vector<std::vector<double>> sums(g.num_nodes(), std::vector<double>(c.heads, 0.0));
      Dense fromsparse(g.num_nodes(), std::vector<double>(g.num_nodes(), 0.0));
      for (std::size_t e = 0; e < a.rows; ++e) {
        const auto i = static_cast<std::size_t>((*idx.dst)[e]);
        const auto j = static_cast<std::size_t>((*idx.src)[e]);
        for (std::size_t k = 0; k < c.heads; ++k) {
          CHECK(a(e, k) > 0.0);
          CHECK(a(e, k) <= 1.0);
          sums[i][k] += a(e, k);
        }
        fromsparse[i][j] += a(e, 0);
      }
      for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        if (g.degree(static_cast<NodeId>(i)) == 0) continue;
        for (std::size_t k = 0; k < c.heads; ++k) CHECK(std::abs(sums[i][k] - 1.0) < 1e-9);
        for (std::size_t j = 0; j < g.num_nodes(); ++j) CHECK(std::abs(fromsparse[i][j] - d.attention[l][0][i][j]) < 1e-10);
      }
      const Matrix& aq = f.query_attention[l].value();
      for (std::size_t k = 0; k < c.heads; ++k) {
        std::vector<double> s(g.num_nodes(), 0.0);
        for (std::size_t e = 0; e < aq.rows; ++e) s[static_cast<std::size_t>((*idx.dst)[e])] += aq(e, k);
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
          if (g.degree(static_cast<NodeId>(i)) > 0) CHECK(std::abs(s[i] - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("3-node path with one head matches the dense oracle") {
  HeteroGraph g = toys::plain_graph(3, {{0, 1}, {1, 2}}, 2);
  ModelConfig c = small_config(1);
  c.layers = 1;
  ModelParams p = init_params(c, g, 5);
  for (auto* m : p.tensors())
    for (double& x : m->data) x *= 0.5;
  MessageIndex idx = build_message_index(g, c.edge_dim);
  ad::Tape t;
  Forward f = run(t, p, c, g, idx, 1);
  DenseForward d = dense_forward(g, p, c, 1);
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t k = 0; k < c.hidden; ++k) CHECK(std::abs(f.hetero[0].value()(v, k) - d.hetero[0][v][k]) < 1e-12);
}

TEST_CASE("hetero encoder ignores the query; probabilities are in (0,1)") {
  std::mt19937_64 rng(8);
  toys::ToySpec spec;
  spec.nodes = 15;
  spec.edges = 30;
  HeteroGraph g = toys::random_graph(rng, spec);
  ModelConfig c = small_config();
  ModelParams p = init_params(c, g, 8);
  MessageIndex idx = build_message_index(g, c.edge_dim);
  ad::Tape t1, t2;
  Forward a = run(t1, p, c, g, idx, 0);
  Forward b = run(t2, p, c, g, idx, 7);
  for (std::size_t l = 0; l < c.layers; ++l) CHECK(a.hetero[l].value().data == b.hetero[l].value().data);
  CHECK(a.probabilities.value().data != b.probabilities.value().data);
  for (double x : a.probabilities.value().data) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  CHECK(predict(p, c, g, idx, 3) == predict(p, c, g, idx, 3));
}

TEST_CASE("relabeling nodes permutes probabilities") {
  // Same graph built twice with ids reversed inside a single node type.
  const std::size_t n = 9;
  std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 4}, {2, 7}, {7, 8}};
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Matrix x(n, 2);
  for (double& v : x.data) v = normal(rng);
  auto perm = [&](NodeId v) { return static_cast<NodeId>(n - 1) - v; };
  auto build = [&](bool permuted) {
    GraphSchema s;
    s.node_types = {{"v", 2}};
    s.edge_types = {{"e", "v", "v", 0}};
    NodeTable t{"v", {}, Matrix(n, 2)};
    for (std::size_t i = 0; i < n; ++i) t.ids.push_back(static_cast<NodeId>(i));
    for (std::size_t i = 0; i < n; ++i) {
      const auto target = permuted ? static_cast<std::size_t>(perm(static_cast<NodeId>(i))) : i;
      for (std::size_t k = 0; k < 2; ++k) t.features(target, k) = x(i, k);
    }
    EdgeTable e{"e", {}, {}, {}};
    for (auto [a, b] : edges) {
      e.src.push_back(permuted ? perm(a) : a);
      e.dst.push_back(permuted ? perm(b) : b);
    }
    return HeteroGraph::build(s, {t}, {e});
  };
  HeteroGraph g1 = build(false), g2 = build(true);
  ModelConfig c = small_config();
  ModelParams p = init_params(c, g1, 9);
  MessageIndex i1 = build_message_index(g1, c.edge_dim), i2 = build_message_index(g2, c.edge_dim);
  const NodeId q = 2;
  auto p1 = predict(p, c, g1, i1, q);
  auto p2 = predict(p, c, g2, i2, perm(q));
  for (std::size_t v = 0; v < n; ++v) CHECK(std::abs(p1[v] - p2[static_cast<std::size_t>(perm(static_cast<NodeId>(v)))]) < 1e-12);
}

TEST_CASE("full model gradient check on a 10-node toy") {
  std::mt19937_64 rng(12);
  toys::ToySpec spec;
  spec.edge_feature_dim = 2;
  HeteroGraph g = toys::random_graph(rng, spec);
  ModelConfig c = small_config();
  ModelParams p = init_params(c, g, 12);
  MessageIndex idx = build_message_index(g, c.edge_dim);
  auto ids = ad::make_index({0, 1, 2, 3, 5, 8});
  std::vector<double> labels{1, 0, 1, 0, 1, 0};
  ad::LossBuilder loss = [&](ad::Tape& tape, const std::vector<Var>& h) {
    ParamVars v = from_handles(p, h);
    Forward f = forward(tape, v, c, g, idx, 0);
    return ad::binary_cross_entropy(f.probabilities, ids, labels);
  };
  auto report = ad::finite_diff_check(loss, p.tensors());
  auto names = p.named(g);
  INFO("worst parameter: " << names[report.worst_param].name);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("shape checks and parameter names") {
  std::mt19937_64 rng(2);
  HeteroGraph g = toys::random_graph(rng, {});
  ModelConfig c = small_config();
  ModelParams p = init_params(c, g, 1);
  CHECK_NOTHROW(check_shapes(p, c, g));
  auto names = p.named(g);
  CHECK(names.size() == p.tensors().size());
  CHECK(names.front().name == "proj.t0");
  std::set<std::string> unique;
  for (const auto& n : names) unique.insert(n.name);
  CHECK(unique.size() == names.size());
  p.hetero[1].w = Matrix(1, 1);
  CHECK_THROWS_WITH_AS(check_shapes(p, c, g), doctest::Contains("hetero.1.w"), std::invalid_argument);
  for (const auto* m : init_params(c, g, 1).tensors())
    for (double x : m->data) CHECK(std::isfinite(x));
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(13);
  HeteroGraph g = toys::random_graph(rng, {});
  Checkpoint ck;
  ck.config = small_config();
  ck.params = init_params(ck.config, g, 77);
  ck.node_types = g.node_types();
  for (const auto& e : g.edge_types()) ck.edge_types.push_back(e.name);
  ck.seed = 77;
  ck.gamma = 0.3125;
  ck.test_tasks = {2, 5};
  const auto file = std::filesystem::temp_directory_path() / "hetcs_ckpt_test.json";
  save_checkpoint(file, ck, g);
  Checkpoint back = load_checkpoint(file, g);
  CHECK(back.gamma == ck.gamma);
  CHECK(back.seed == 77);
  CHECK(back.test_tasks == ck.test_tasks);
  CHECK(back.config.hidden == ck.config.hidden);
  auto a = ck.params.tensors(), b = back.params.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->data == b[i]->data);

  std::string text = serialize_checkpoint(ck, g);
  HeteroGraph other = toys::plain_graph(3, {{0, 1}});
  CHECK_THROWS_AS(parse_checkpoint(text, other), std::invalid_argument);
  std::filesystem::remove(file);
}
