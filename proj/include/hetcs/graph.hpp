#pragma once

// Heterogeneous information network: typed nodes in one global id space,
// one CSR adjacency per edge type, per-type feature tables.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetcs/autodiff.hpp"

namespace hetcs {

using NodeId = std::int32_t;
using NodeTypeId = std::int32_t;
using EdgeTypeId = std::int32_t;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NodeTypeInfo {
  std::string name;
  std::size_t feature_dim = 0;
};

struct EdgeTypeInfo {
  std::string name;
  NodeTypeId src = 0;
  NodeTypeId dst = 0;
  /// 0 when edges of this type carry no features.
  std::size_t feature_dim = 0;
  /// For a generated inverse type, the declared type it mirrors; -1 otherwise.
  EdgeTypeId inverse_of = -1;
  /// The paired type (declared ↔ generated inverse); -1 when not symmetrised.
  EdgeTypeId paired = -1;

  bool is_inverse() const { return inverse_of >= 0; }
  /// Type whose feature table and ingestion order this type's edge ids index.
  EdgeTypeId feature_source(EdgeTypeId self) const { return is_inverse() ? inverse_of : self; }
};

/// Declared node and edge types. Edge endpoints name node types.
struct GraphSchema {
  struct EdgeDecl {
    std::string name;
    std::string src;
    std::string dst;
    std::size_t feature_dim = 0;
  };
  std::vector<NodeTypeInfo> node_types;
  std::vector<EdgeDecl> edge_types;
};

struct NodeTable {
  std::string type;
  std::vector<NodeId> ids;
  /// ids.size() × feature_dim.
  ad::Matrix features;
};

struct EdgeTable {
  std::string type;
  std::vector<NodeId> src;
  std::vector<NodeId> dst;
  /// Empty, or src.size() × feature_dim.
  ad::Matrix features;
};

struct BuildOptions {
  /// Add a companion type R^-1 with reversed edges for every declared type R.
  bool add_inverse = true;
};

struct Neighbor {
  NodeId node;
  EdgeTypeId type;
  /// Row in the feature table of the edge type's feature source.
  std::int64_t edge;

  bool operator==(const Neighbor&) const = default;
};

struct Csr {
  std::vector<std::int64_t> offsets;  // num_nodes + 1
  std::vector<NodeId> targets;
  std::vector<std::int64_t> edge_ids;
};

class HeteroGraph {
 public:
  /// Raw arrays behind a graph. Exposed so tools and tests can assemble
  /// graphs directly; HeteroGraph::unchecked() does not validate them.
  struct Storage {
    std::vector<NodeTypeInfo> node_types;
    std::vector<EdgeTypeInfo> edge_types;
    std::vector<NodeTypeId> node_type_of;
    std::vector<std::vector<NodeId>> type_nodes;  // ascending global ids
    std::vector<std::int32_t> index_in_type;
    std::vector<ad::Matrix> node_features;  // per node type, rows follow type_nodes
    std::vector<Csr> adjacency;             // per edge type
    std::vector<ad::Matrix> edge_features;  // per edge type; empty for featureless/inverse
    // Declared edges in ingestion order (empty for inverse types).
    std::vector<std::vector<NodeId>> edge_src;
    std::vector<std::vector<NodeId>> edge_dst;
  };

  HeteroGraph() = default;

  /// Validates tables against the schema and builds per-type CSR. Throws
  /// GraphError on dangling or duplicate ids, feature-width mismatches,
  /// endpoint type mismatches and non-contiguous id ranges.
  static HeteroGraph build(const GraphSchema& schema, const std::vector<NodeTable>& nodes,
                           const std::vector<EdgeTable>& edges, BuildOptions options = {});
  static HeteroGraph unchecked(Storage storage);

  std::size_t num_nodes() const { return s_.node_type_of.size(); }
  std::size_t num_node_types() const { return s_.node_types.size(); }
  std::size_t num_edge_types() const { return s_.edge_types.size(); }
  /// Total CSR entries over all edge types.
  std::size_t num_edges() const;
  /// Edges as ingested (declared types only).
  std::size_t num_input_edges() const;

  const NodeTypeInfo& node_type(NodeTypeId t) const { return s_.node_types.at(static_cast<std::size_t>(t)); }
  const EdgeTypeInfo& edge_type(EdgeTypeId r) const { return s_.edge_types.at(static_cast<std::size_t>(r)); }
  const std::vector<NodeTypeInfo>& node_types() const { return s_.node_types; }
  const std::vector<EdgeTypeInfo>& edge_types() const { return s_.edge_types; }
  std::optional<NodeTypeId> find_node_type(std::string_view name) const;
  std::optional<EdgeTypeId> find_edge_type(std::string_view name) const;

  NodeTypeId type_of(NodeId v) const;
  std::span<const NodeId> nodes_of_type(NodeTypeId t) const {
    return s_.type_nodes.at(static_cast<std::size_t>(t));
  }
  std::size_t index_in_type(NodeId v) const {
    return static_cast<std::size_t>(s_.index_in_type.at(static_cast<std::size_t>(v)));
  }
  const ad::Matrix& features(NodeTypeId t) const {
    return s_.node_features.at(static_cast<std::size_t>(t));
  }
  std::span<const double> feature_row(NodeId v) const;

  const Csr& csr(EdgeTypeId r) const { return s_.adjacency.at(static_cast<std::size_t>(r)); }
  /// Feature table for edges of type r (shared with the declared type for
  /// inverses), or nullptr if the type has no features.
  const ad::Matrix* edge_features(EdgeTypeId r) const;

  /// CSR rows of v over all edge types, edge-type id ascending, then
  /// ingestion order.
  std::vector<Neighbor> neighbors(NodeId v) const;
  std::size_t degree(NodeId v) const;

  template <typename F>
  void for_each_neighbor(NodeId v, F&& f) const {
    const auto row = static_cast<std::size_t>(v);
    for (std::size_t r = 0; r < s_.adjacency.size(); ++r) {
      const Csr& c = s_.adjacency[r];
      for (auto i = c.offsets[row]; i < c.offsets[row + 1]; ++i) {
        f(c.targets[static_cast<std::size_t>(i)], static_cast<EdgeTypeId>(r),
          c.edge_ids[static_cast<std::size_t>(i)]);
      }
    }
  }

  const Storage& storage() const { return s_; }

 private:
  explicit HeteroGraph(Storage s) : s_(std::move(s)) {}
  void check_node(NodeId v) const;

  Storage s_;
};

/// Lists every violated structural invariant; empty iff the graph is valid.
std::vector<std::string> validate(const HeteroGraph& graph);

/// Training / evaluation unit: a query node with labeled members and
/// non-members restricted to the target node types.
struct QueryTask {
  NodeId query = 0;
  std::vector<NodeId> pos;
  std::vector<NodeId> neg;
  std::vector<NodeTypeId> target_types;
};

/// Throws GraphError if the task breaks q ∈ pos, pos ∩ neg = ∅, or has a
/// positive outside the target types.
void check_task(const HeteroGraph& graph, const QueryTask& task);

struct CommunityMember {
  NodeId id;
  NodeTypeId type;
  double p;
};

struct CommunityResult {
  NodeId query = 0;
  /// Discovery order; the query node comes first.
  std::vector<CommunityMember> members;
  std::size_t visited_count = 0;
  std::size_t max_depth_reached = 0;
  /// Whether the subgraph induced on the members is connected.
  bool induced_connected = true;
  double millis = 0.0;

  std::vector<NodeId> member_ids() const;
};

}  // namespace hetcs
