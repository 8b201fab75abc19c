#pragma once

// Fanout-bounded recursive neighbour sampling for subgraph training.

#include <cstdint>
#include <span>
#include <vector>

#include "hetcs/graph.hpp"

namespace hetcs {

struct SampledBlock {
  /// Induced subgraph over the union of all sampled layers, local ids.
  HeteroGraph graph;
  /// Local id → global id, ascending.
  std::vector<NodeId> global_ids;
  /// layers[l] = S_l (global ids, ascending); layers[L] holds the labeled nodes.
  std::vector<std::vector<NodeId>> layers;

  /// Local id of a node in the block; throws GraphError if absent.
  NodeId local(NodeId global) const;
  bool contains(NodeId global) const;
  /// Task with every id rewritten to local ids.
  QueryTask localize(const QueryTask& task) const;
};

/// Labeled nodes of a task: {q} ∪ pos ∪ neg, ascending, without duplicates.
std::vector<NodeId> labeled_nodes(const QueryTask& task);

/// S_L = labeled nodes; for l = L..1 every v ∈ S_l adds min(f, deg(v))
/// distinct uniformly chosen neighbour entries to S_{l−1}, where f is
/// fanouts[l−1] (the list is ordered by layer, f_1 first). Deterministic for
/// a fixed seed. Throws std::invalid_argument on a zero fanout or an empty
/// labeled set.
SampledBlock sample_block(const HeteroGraph& graph, const QueryTask& task, std::span<const std::size_t> fanouts,
                          std::uint64_t seed);

/// Subgraph induced on `nodes` (ascending global ids). Local id i is nodes[i];
/// neighbour order and edge feature rows are preserved.
HeteroGraph induced_subgraph(const HeteroGraph& graph, std::span<const NodeId> nodes);

/// Nodes within `hops` of any seed (seeds included), ascending.
std::vector<NodeId> k_hop_neighborhood(const HeteroGraph& graph, std::span<const NodeId> seeds, std::size_t hops);

}  // namespace hetcs
