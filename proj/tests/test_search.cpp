#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>

#include "hetcs/search.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace hetcs;
using Set = std::vector<NodeId>;

namespace {

Set sorted_members(const CommunityResult& r) {
  Set ids = r.member_ids();
  std::sort(ids.begin(), ids.end());
  return ids;
}

SearchConfig depth(std::optional<std::size_t> d, double gamma = 0.5) {
  SearchConfig c;
  c.gamma = gamma;
  c.max_depth = d;
  return c;
}

HeteroGraph typed_chain() {
  GraphSchema s;
  s.node_types = {{"x", 1}, {"y", 1}};
  s.edge_types = {{"r", "x", "y", 0}};
  NodeTable xs{"x", {0, 2}, ad::Matrix(2, 1)};
  NodeTable ys{"y", {1}, ad::Matrix(1, 1)};
  return HeteroGraph::build(s, {xs, ys}, {{"r", {0, 2}, {1, 1}, {}}});
}

std::size_t diameter_bound(const HeteroGraph& g) { return g.num_nodes() + 1; }

}  // namespace

TEST_CASE("depth zero returns only the query") {
  HeteroGraph g = toys::plain_graph(3, {{0, 1}, {1, 2}});
  std::vector<double> p{0.9, 0.9, 0.9};
  auto r = search(g, 1, p, depth(0));
  CHECK(r.member_ids() == Set{1});
  CHECK(r.visited_count == 0);
}

TEST_CASE("hand-traced example") {
  // a=0, b=1, c=2, d=3 with edges a-b, a-c, b-d.
  HeteroGraph g = toys::plain_graph(4, {{0, 1}, {0, 2}, {1, 3}});
  std::vector<double> p{0.1, 0.9, 0.3, 0.8};
  CHECK(sorted_members(search(g, 0, p, depth(1))) == Set{0, 1});
  CHECK(sorted_members(search(g, 0, p, depth(2))) == Set{0, 1, 3});
  auto r = search(g, 0, p, depth(2));
  CHECK(r.members.front().id == 0);
  CHECK(r.max_depth_reached == 1);
}

TEST_CASE("untargeted nodes are traversed but excluded") {
  HeteroGraph g = typed_chain();
  std::vector<double> p{0.2, 0.99, 0.9};
  SearchConfig c = depth(3);
  c.target_types = {0};
  auto r = search(g, 0, p, c);
  CHECK(sorted_members(r) == Set{0, 2});
  CHECK_FALSE(r.induced_connected);
  c.target_types = {};
  CHECK(sorted_members(search(g, 0, p, c)) == Set{0, 1, 2});
}

TEST_CASE("unreachable components are excluded") {
  HeteroGraph g = toys::plain_graph(5, {{0, 1}, {2, 3}, {3, 4}});
  std::vector<double> p{0.9, 0.9, 0.99, 0.99, 0.99};
  CHECK(sorted_members(full_search(g, 0, p, 0.5, {})) == Set{0, 1});
}

TEST_CASE("errors") {
  HeteroGraph g = toys::plain_graph(3, {{0, 1}, {1, 2}});
  std::vector<double> p{0.9, NAN, 0.9};
  CHECK_THROWS_AS(search(g, 0, p, depth(2)), std::invalid_argument);
  CHECK_NOTHROW(search(g, 2, std::vector<double>{NAN, 0.1, 0.9}, depth(1)));
  std::vector<double> ok{0.9, 0.9, 0.9};
  CHECK_THROWS_AS(search(g, 3, ok, depth(1)), std::invalid_argument);
  CHECK_THROWS_AS(search(g, 0, ok, depth(1, 1.5)), std::invalid_argument);
  CHECK_THROWS_AS(search(g, 0, std::vector<double>{0.9}, depth(1)), std::invalid_argument);
}

TEST_CASE("random graphs: brute force, monotonicity, locality") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    toys::ToySpec spec;
    spec.nodes = 30;
    spec.edges = 25 + static_cast<std::size_t>(trial);
    HeteroGraph g = toys::random_graph(rng, spec);
    std::vector<double> p(g.num_nodes());
    for (double& x : p) x = unit(rng);
    const NodeId q = static_cast<NodeId>(trial) % 30;
    const std::vector<NodeTypeId> types = trial % 2 ? std::vector<NodeTypeId>{0, 1} : std::vector<NodeTypeId>{};
    const double gamma = 0.4;

    auto full = full_search(g, q, p, gamma, types);
    CHECK(sorted_members(full) == oracles::search_members(g, q, p, gamma, types));
    SearchConfig big = depth(diameter_bound(g), gamma);
    big.target_types = types;
    CHECK(sorted_members(search(g, q, p, big)) == sorted_members(full));
    CHECK(full.visited_count <= g.num_nodes());
    CHECK(full.induced_connected == induced_connected(g, full.member_ids()));

    Set previous{q};
    for (std::size_t d = 0; d <= 6; ++d) {
      SearchConfig c = depth(d, gamma);
      c.target_types = types;
      auto r = search(g, q, p, c);
      Set now = sorted_members(r);
      CHECK(now == oracles::search_members(g, q, p, gamma, types, d));
      CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
      previous = now;
      // Members other than q sit within d hops.
      Set ball{q};
      for (std::size_t h = 0; h < d; ++h) {
        Set next = ball;
        for (NodeId v : ball)
          for (const auto& nb : g.neighbors(v)) next.push_back(nb.node);
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        ball = next;
      }
      CHECK(std::includes(ball.begin(), ball.end(), now.begin(), now.end()));
      SearchConfig loose = c;
      loose.gamma = 0.2;
      Set wider = sorted_members(search(g, q, p, loose));
      CHECK(std::includes(wider.begin(), wider.end(), now.begin(), now.end()));
    }
  }
}

TEST_CASE("induced connectivity") {
  HeteroGraph g = toys::plain_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK(induced_connected(g, Set{}));
  CHECK(induced_connected(g, Set{0, 1, 2}));
  CHECK_FALSE(induced_connected(g, Set{0, 2}));
}

TEST_CASE("community JSON") {
  HeteroGraph g = toys::plain_graph(4, {{0, 1}, {0, 2}, {1, 3}});
  std::vector<double> p{0.1, 0.9, 0.3, 0.8};
  SearchConfig c = depth(2);
  auto doc = nlohmann::json::parse(community_json(g, search(g, 0, p, c), c));
  CHECK(doc["query"] == 0);
  CHECK(doc["gamma"] == 0.5);
  CHECK(doc["d_max"] == 2);
  REQUIRE(doc["members"].size() == 3);
  CHECK(doc["members"][0]["id"] == 0);
  CHECK(doc["members"][1]["type"] == "v");
  CHECK(doc["members"][1]["p"] == 0.9);
  CHECK(doc.contains("visited"));
  CHECK(doc.contains("millis"));
  SearchConfig unbounded = depth(std::nullopt);
  auto doc2 = nlohmann::json::parse(community_json(g, search(g, 0, p, unbounded), unbounded));
  CHECK(doc2["d_max"].is_null());
}
