#pragma once

// Dataset directory format:
//   schema.json         node types {name, feature_dim}; edge types {name, src, dst[, feature_dim]}
//   nodes_<type>.tsv    node_id \t f1 .. f_dt
//   edges_<etype>.tsv   src \t dst [\t features...]
//   tasks.json          [{query, pos, neg, target_types}]   (optional)
//   communities.json    [{id, members}]                     (optional ground truth)

#include <filesystem>
#include <string>
#include <vector>

#include "hetcs/graph.hpp"

namespace hetcs {

class FormatError : public GraphError {
 public:
  FormatError(const std::filesystem::path& file, std::size_t line, const std::string& what);
  FormatError(const std::filesystem::path& file, const std::string& what);
};

struct Community {
  std::int32_t id = 0;
  std::vector<NodeId> members;
};

struct Dataset {
  GraphSchema schema;
  HeteroGraph graph;
  std::vector<QueryTask> tasks;
  std::vector<Community> communities;
};

GraphSchema read_schema(const std::filesystem::path& file);
void write_schema(const std::filesystem::path& file, const GraphSchema& schema);

/// Declared (non-inverse) types of a built graph.
GraphSchema schema_of(const HeteroGraph& graph);

NodeTable read_node_table(const std::filesystem::path& file, const NodeTypeInfo& type);
EdgeTable read_edge_table(const std::filesystem::path& file, const GraphSchema::EdgeDecl& type);

std::vector<QueryTask> read_tasks(const std::filesystem::path& file, const HeteroGraph& graph);
void write_tasks(const std::filesystem::path& file, const HeteroGraph& graph,
                 const std::vector<QueryTask>& tasks);

std::vector<Community> read_communities(const std::filesystem::path& file, const HeteroGraph& graph);
void write_communities(const std::filesystem::path& file, const std::vector<Community>& communities);

Dataset load_dataset(const std::filesystem::path& dir, BuildOptions options = {});

/// Writes schema, node and edge tables of the declared types in ingestion
/// order, so load_dataset() rebuilds identical CSR arrays.
void save_dataset(const std::filesystem::path& dir, const HeteroGraph& graph,
                  const std::vector<QueryTask>& tasks, const std::vector<Community>& communities);

/// Parses "a,b" into node type ids. Each token is a type name or a unique
/// name prefix.
std::vector<NodeTypeId> parse_type_list(const HeteroGraph& graph, const std::string& list);

}  // namespace hetcs
