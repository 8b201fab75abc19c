#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hetcs/dataset_io.hpp"
#include "hetcs/graph.hpp"
#include "toys.hpp"

using namespace hetcs;
namespace fs = std::filesystem;

namespace {

GraphSchema biblio_schema() {
  GraphSchema s;
  s.node_types = {{"author", 2}, {"paper", 2}, {"term", 1}, {"venue", 1}};
  s.edge_types = {{"writes", "author", "paper", 0}, {"has_term", "paper", "term", 0}, {"published_in", "paper", "venue", 0}};
  return s;
}

NodeTable table(const std::string& type, std::vector<NodeId> ids, std::size_t dim) {
  return {type, ids, ad::Matrix(ids.size(), dim, 0.5)};
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hetcs_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("empty edge tables give isolated nodes") {
  GraphSchema s;
  s.node_types = {{"v", 1}};
  s.edge_types = {{"e", "v", "v", 0}};
  HeteroGraph g = HeteroGraph::build(s, {table("v", {0, 1, 2}, 1)}, {});
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edge_types() == 2);
  for (NodeId v = 0; v < 3; ++v) CHECK(g.neighbors(v).empty());
  for (EdgeTypeId r = 0; r < 2; ++r) {
    CHECK(g.csr(r).offsets == std::vector<std::int64_t>(4, 0));
  }
  CHECK(validate(g).empty());
}

TEST_CASE("inverse edges make neighbourhoods symmetric") {
  GraphSchema s = biblio_schema();
  std::vector<NodeTable> nodes{table("author", {0}, 2), table("paper", {1}, 2), table("term", {2}, 1),
                               table("venue", {3}, 1)};
  HeteroGraph g = HeteroGraph::build(s, nodes, {{"writes", {0}, {1}, {}}});
  const auto r = g.find_edge_type("writes^-1");
  REQUIRE(r.has_value());
  const auto nb = g.neighbors(1);
  REQUIRE(nb.size() == 1);
  CHECK(nb[0].node == 0);
  CHECK(nb[0].type == *r);
  CHECK(g.edge_type(*r).inverse_of == *g.find_edge_type("writes"));
}

TEST_CASE("bibliographic toy counts") {
  GraphSchema s = biblio_schema();
  std::vector<NodeTable> nodes{table("author", {0, 1}, 2), table("paper", {2, 3, 4}, 2), table("term", {5, 6}, 1),
                               table("venue", {7}, 1)};
  std::vector<EdgeTable> edges{{"writes", {0, 0, 1, 1}, {2, 3, 3, 4}, {}},
                               {"has_term", {2, 3, 4}, {5, 6, 6}, {}},
                               {"published_in", {2, 3}, {7, 7}, {}}};
  HeteroGraph g = HeteroGraph::build(s, nodes, edges);
  CHECK(g.num_edge_types() == 6);
  CHECK(g.csr(*g.find_edge_type("writes")).targets.size() == 4);
  CHECK(g.csr(*g.find_edge_type("has_term")).targets.size() == 3);
  CHECK(g.csr(*g.find_edge_type("published_in")).targets.size() == 2);
  CHECK(g.num_input_edges() == 9);
  CHECK(g.num_edges() == 18);
  HeteroGraph plain = HeteroGraph::build(s, nodes, edges, {false});
  CHECK(plain.num_edges() == 9);
  CHECK(g.nodes_of_type(1).size() == 3);
}

TEST_CASE("neighbour order") {
  SUBCASE("star in ingestion order") {
    HeteroGraph g = toys::plain_graph(4, {{0, 3}, {0, 1}, {0, 2}});
    const auto nb = g.neighbors(0);
    REQUIRE(nb.size() == 3);
    CHECK(nb[0].node == 3);
    CHECK(nb[1].node == 1);
    CHECK(nb[2].node == 2);
  }
  SUBCASE("grouped by edge type id") {
    GraphSchema s;
    s.node_types = {{"v", 1}};
    s.edge_types = {{"a", "v", "v", 0}, {"b", "v", "v", 0}};
    HeteroGraph g = HeteroGraph::build(s, {table("v", {0, 1, 2, 3}, 1)},
                                       {{"b", {0, 0}, {1, 2}, {}}, {"a", {0}, {3}, {}}}, {false});
    const auto nb = g.neighbors(0);
    REQUIRE(nb.size() == 3);
    CHECK(nb[0] == Neighbor{3, 0, 0});
    CHECK(nb[1] == Neighbor{1, 1, 0});
    CHECK(nb[2] == Neighbor{2, 1, 1});
  }
  SUBCASE("out of range") {
    HeteroGraph g = toys::plain_graph(2, {});
    CHECK_THROWS_AS(g.neighbors(2), GraphError);
    CHECK_THROWS_AS(g.neighbors(-1), GraphError);
  }
}

TEST_CASE("build errors") {
  GraphSchema s = biblio_schema();
  std::vector<NodeTable> nodes{table("author", {0}, 2), table("paper", {1}, 2), table("term", {2}, 1),
                               table("venue", {3}, 1)};
  CHECK_THROWS_AS(HeteroGraph::build(s, nodes, {{"writes", {0}, {9}, {}}}), GraphError);
  CHECK_THROWS_AS(HeteroGraph::build(s, nodes, {{"writes", {1}, {0}, {}}}), GraphError);
  auto dup = nodes;
  dup[1].ids = {0};
  CHECK_THROWS_AS(HeteroGraph::build(s, dup, {}), GraphError);
  auto bad_dim = nodes;
  bad_dim[0].features = ad::Matrix(1, 3);
  CHECK_THROWS_AS(HeteroGraph::build(s, bad_dim, {}), GraphError);
  auto gap = nodes;
  gap[3].ids = {5};
  CHECK_THROWS_AS(HeteroGraph::build(s, gap, {}), GraphError);
}

TEST_CASE("validate reports forced violations") {
  HeteroGraph g = toys::plain_graph(3, {{0, 1}, {1, 2}});
  CHECK(validate(g).empty());
  auto s = g.storage();
  s.adjacency[0].targets[0] = 7;
  auto report = validate(HeteroGraph::unchecked(s));
  REQUIRE(!report.empty());
  CHECK(report.front().find("7") != std::string::npos);

  auto s2 = g.storage();
  s2.node_features[0] = ad::Matrix(2, 1);
  auto report2 = validate(HeteroGraph::unchecked(s2));
  REQUIRE(!report2.empty());
  bool named = false;
  for (const auto& line : report2) named |= line.find("'v'") != std::string::npos && line.find("2") != std::string::npos;
  CHECK(named);
}

TEST_CASE("symmetry and edge count on random graphs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    toys::ToySpec spec;
    spec.nodes = 12;
    spec.edges = 25;
    HeteroGraph g = toys::random_graph(rng, spec);
    CHECK(validate(g).empty());
    CHECK(g.num_edges() == 2 * g.num_input_edges());
    for (NodeId v = 0; v < 12; ++v) {
      for (const auto& nb : g.neighbors(v)) {
        const EdgeTypeId paired = g.edge_type(nb.type).paired;
        const auto back = g.neighbors(nb.node);
        const bool found = std::any_of(back.begin(), back.end(), [&](const Neighbor& x) {
          return x.node == v && x.type == paired && x.edge == nb.edge;
        });
        CHECK(found);
      }
    }
  }
}

TEST_CASE("dataset round trip keeps CSR arrays") {
  std::mt19937_64 rng(6);
  toys::ToySpec spec;
  spec.edge_feature_dim = 2;
  HeteroGraph g = toys::random_graph(rng, spec);
  std::vector<QueryTask> tasks{{0, {0, 3}, {1}, {0}}};
  std::vector<Community> comms{{0, {0, 3, 6}}, {1, {1, 4}}};
  const fs::path dir = temp_dir("roundtrip");
  save_dataset(dir, g, tasks, comms);
  Dataset ds = load_dataset(dir);
  REQUIRE(ds.graph.num_edge_types() == g.num_edge_types());
  for (EdgeTypeId r = 0; r < static_cast<EdgeTypeId>(g.num_edge_types()); ++r) {
    CHECK(ds.graph.csr(r).offsets == g.csr(r).offsets);
    CHECK(ds.graph.csr(r).targets == g.csr(r).targets);
    CHECK(ds.graph.csr(r).edge_ids == g.csr(r).edge_ids);
  }
  for (NodeTypeId t = 0; t < 3; ++t) CHECK(ds.graph.features(t).data == g.features(t).data);
  REQUIRE(ds.graph.edge_features(0) != nullptr);
  CHECK(ds.graph.edge_features(0)->data == g.edge_features(0)->data);
  REQUIRE(ds.tasks.size() == 1);
  CHECK(ds.tasks[0].pos == tasks[0].pos);
  REQUIRE(ds.communities.size() == 2);
  CHECK(ds.communities[1].members == comms[1].members);
  fs::remove_all(dir);
}

TEST_CASE("loaders reject malformed rows with line numbers") {
  const fs::path dir = temp_dir("malformed");
  {
    std::ofstream(dir / "nodes.tsv") << "0\t1.0\n1\tabc\n";
  }
  try {
    read_node_table(dir / "nodes.tsv", {"v", 1});
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream(dir / "edges.tsv") << "0\t1\n0\n";
  }
  try {
    read_edge_table(dir / "edges.tsv", {"e", "v", "v", 0});
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream(dir / "schema.json") << R"({"node_types": [], "edge_types": [], "extra": 1})";
  }
  CHECK_THROWS_AS(read_schema(dir / "schema.json"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("task validation") {
  HeteroGraph g = toys::plain_graph(4, {{0, 1}});
  CHECK_NOTHROW(check_task(g, {0, {0, 1}, {2}, {0}}));
  CHECK_THROWS_AS(check_task(g, {0, {1}, {2}, {0}}), GraphError);
  CHECK_THROWS_AS(check_task(g, {0, {0, 2}, {2}, {0}}), GraphError);
  CHECK_THROWS_AS(check_task(g, {0, {0, 9}, {}, {0}}), GraphError);
}

TEST_CASE("type lists accept names and unique prefixes") {
  GraphSchema s = biblio_schema();
  std::vector<NodeTable> nodes{table("author", {0}, 2), table("paper", {1}, 2), table("term", {2}, 1),
                               table("venue", {3}, 1)};
  HeteroGraph g = HeteroGraph::build(s, nodes, {});
  CHECK(parse_type_list(g, "a,p") == std::vector<NodeTypeId>{0, 1});
  CHECK(parse_type_list(g, "venue") == std::vector<NodeTypeId>{3});
  CHECK_THROWS(parse_type_list(g, "x"));
}
