#include "hetcs/search.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <stdexcept>
#include <utility>

namespace hetcs {

namespace {

std::vector<char> type_mask(const HeteroGraph& graph, const std::vector<NodeTypeId>& types) {
  std::vector<char> mask(graph.num_node_types(), types.empty() ? 1 : 0);
  for (NodeTypeId t : types) {
    if (t < 0 || static_cast<std::size_t>(t) >= graph.num_node_types()) {
      throw std::invalid_argument("search: unknown node type id " + std::to_string(t));
    }
    mask[static_cast<std::size_t>(t)] = 1;
  }
  return mask;
}

}  // namespace

CommunityResult search(const HeteroGraph& graph, NodeId q, std::span<const double> probabilities,
                       const SearchConfig& config) {
  const std::size_t n = graph.num_nodes();
  if (q < 0 || static_cast<std::size_t>(q) >= n) {
    throw std::invalid_argument("search: query node " + std::to_string(q) + " out of range");
  }
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) {
    throw std::invalid_argument("search: gamma must lie in [0, 1]");
  }
  if (probabilities.size() != n) {
    throw std::invalid_argument("search: expected " + std::to_string(n) + " probabilities, got " +
                                std::to_string(probabilities.size()));
  }
  const auto mask = type_mask(graph, config.target_types);
  const auto start = std::chrono::steady_clock::now();

  CommunityResult result;
  result.query = q;
  std::vector<char> visited(n, 0);
  std::vector<char> member(n, 0);
  member[static_cast<std::size_t>(q)] = 1;
  result.members.push_back({q, graph.type_of(q), probabilities[static_cast<std::size_t>(q)]});

  std::vector<std::pair<NodeId, std::size_t>> queue{{q, 0}};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto [v, depth] = queue[head];
    if (visited[static_cast<std::size_t>(v)]) continue;
    if (config.max_depth && depth >= *config.max_depth) continue;
    visited[static_cast<std::size_t>(v)] = 1;
    ++result.visited_count;
    result.max_depth_reached = std::max(result.max_depth_reached, depth);
    graph.for_each_neighbor(v, [&](NodeId u, EdgeTypeId, std::int64_t) {
      const auto ui = static_cast<std::size_t>(u);
      queue.emplace_back(u, depth + 1);
      if (member[ui]) return;
      const double p = probabilities[ui];
      if (std::isnan(p)) throw std::invalid_argument("search: missing probability for node " + std::to_string(u));
      const NodeTypeId t = graph.type_of(u);
      if (mask[static_cast<std::size_t>(t)] && p > config.gamma) {
        member[ui] = 1;
        result.members.push_back({u, t, p});
      }
    });
  }
  result.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  const auto ids = result.member_ids();
  result.induced_connected = induced_connected(graph, ids);
  return result;
}

CommunityResult full_search(const HeteroGraph& graph, NodeId q, std::span<const double> probabilities, double gamma,
                            std::vector<NodeTypeId> target_types) {
  SearchConfig config;
  config.gamma = gamma;
  config.target_types = std::move(target_types);
  return search(graph, q, probabilities, config);
}

bool induced_connected(const HeteroGraph& graph, std::span<const NodeId> members) {
  if (members.empty()) return true;
  std::vector<char> in(graph.num_nodes(), 0);
  for (NodeId v : members) in[static_cast<std::size_t>(v)] = 1;
  std::vector<NodeId> stack{members.front()};
  in[static_cast<std::size_t>(members.front())] = 2;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    graph.for_each_neighbor(v, [&](NodeId u, EdgeTypeId, std::int64_t) {
      if (in[static_cast<std::size_t>(u)] == 1) {
        in[static_cast<std::size_t>(u)] = 2;
        ++reached;
        stack.push_back(u);
      }
    });
  }
  std::size_t distinct = 0;
  for (char c : in) distinct += c != 0;
  return reached == distinct;
}

std::string community_json(const HeteroGraph& graph, const CommunityResult& result, const SearchConfig& config) {
  nlohmann::ordered_json j;
  j["query"] = result.query;
  j["gamma"] = config.gamma;
  j["d_max"] = config.max_depth ? nlohmann::ordered_json(*config.max_depth) : nlohmann::ordered_json(nullptr);
  j["members"] = nlohmann::ordered_json::array();
  for (const auto& m : result.members) {
    j["members"].push_back({{"id", m.id}, {"type", graph.node_type(m.type).name}, {"p", m.p}});
  }
  j["visited"] = result.visited_count;
  j["max_depth"] = result.max_depth_reached;
  j["connected"] = result.induced_connected;
  j["millis"] = result.millis;
  return j.dump();
}

}  // namespace hetcs
