#pragma once

// Depth-bounded breadth-first extraction of a query's community from
// per-node membership probabilities.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetcs/graph.hpp"

namespace hetcs {

struct SearchConfig {
  double gamma = 0.5;
  /// Maximum expansion depth; nullopt searches without a bound.
  std::optional<std::size_t> max_depth;
  /// Types eligible for membership. Empty means every type.
  std::vector<NodeTypeId> target_types;
};

/// BFS from (q, 0). A dequeued node is expanded iff it is unvisited and its
/// depth is below the bound; all neighbours of an expanded node are enqueued,
/// and each joins the community when its type is targeted and p > gamma.
/// q is always a member. `probabilities` has one entry per node; a NaN entry
/// met during the search is reported as missing.
CommunityResult search(const HeteroGraph& graph, NodeId q, std::span<const double> probabilities,
                       const SearchConfig& config);

/// search() without a depth bound.
CommunityResult full_search(const HeteroGraph& graph, NodeId q, std::span<const double> probabilities, double gamma,
                            std::vector<NodeTypeId> target_types);

/// Whether the subgraph induced on `members` is connected (true when empty).
bool induced_connected(const HeteroGraph& graph, std::span<const NodeId> members);

/// {query, gamma, d_max, members:[{id, type, p}], visited, max_depth, connected, millis}.
/// `d_max` is null for unbounded searches; `type` is the node type name.
std::string community_json(const HeteroGraph& graph, const CommunityResult& result, const SearchConfig& config);

}  // namespace hetcs
