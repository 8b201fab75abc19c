#include "hetcs/graph.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace hetcs {

namespace {

Csr build_csr(std::size_t num_nodes, const std::vector<NodeId>& from, const std::vector<NodeId>& to) {
  Csr c;
  c.offsets.assign(num_nodes + 1, 0);
  for (NodeId u : from) ++c.offsets[static_cast<std::size_t>(u) + 1];
  for (std::size_t i = 0; i < num_nodes; ++i) c.offsets[i + 1] += c.offsets[i];
  c.targets.resize(from.size());
  c.edge_ids.resize(from.size());
  std::vector<std::int64_t> cursor(c.offsets.begin(), c.offsets.end() - 1);
  // Stable in ingestion order within each row.
  for (std::size_t e = 0; e < from.size(); ++e) {
    const auto slot = static_cast<std::size_t>(cursor[static_cast<std::size_t>(from[e])]++);
    c.targets[slot] = to[e];
    c.edge_ids[slot] = static_cast<std::int64_t>(e);
  }
  return c;
}

}  // namespace

HeteroGraph HeteroGraph::build(const GraphSchema& schema, const std::vector<NodeTable>& nodes,
                               const std::vector<EdgeTable>& edges, BuildOptions options) {
  Storage s;
  std::unordered_map<std::string, NodeTypeId> node_type_ids;
  for (const auto& nt : schema.node_types) {
    if (!node_type_ids.emplace(nt.name, static_cast<NodeTypeId>(s.node_types.size())).second) {
      throw GraphError("duplicate node type '" + nt.name + "'");
    }
    s.node_types.push_back(nt);
  }
  std::unordered_map<std::string, EdgeTypeId> edge_type_ids;
  for (const auto& decl : schema.edge_types) {
    auto src = node_type_ids.find(decl.src);
    auto dst = node_type_ids.find(decl.dst);
    if (src == node_type_ids.end() || dst == node_type_ids.end()) {
      throw GraphError("edge type '" + decl.name + "' references undeclared node type '" +
                       (src == node_type_ids.end() ? decl.src : decl.dst) + "'");
    }
    if (!edge_type_ids.emplace(decl.name, static_cast<EdgeTypeId>(s.edge_types.size())).second) {
      throw GraphError("duplicate edge type '" + decl.name + "'");
    }
    s.edge_types.push_back({decl.name, src->second, dst->second, decl.feature_dim, -1, -1});
  }
  const std::size_t declared = s.edge_types.size();

  // Nodes.
  const std::size_t num_types = s.node_types.size();
  std::size_t total = 0;
  std::vector<std::vector<const NodeTable*>> tables_for_type(num_types);
  for (const auto& table : nodes) {
    auto it = node_type_ids.find(table.type);
    if (it == node_type_ids.end()) throw GraphError("node table for undeclared type '" + table.type + "'");
    const auto t = static_cast<std::size_t>(it->second);
    const std::size_t dim = s.node_types[t].feature_dim;
    if (table.features.rows != table.ids.size() || (table.features.cols != dim && !table.ids.empty())) {
      throw GraphError("feature-dim mismatch for node type '" + table.type + "': expected " +
                       std::to_string(table.ids.size()) + "x" + std::to_string(dim) + ", got " +
                       table.features.shape_str());
    }
    tables_for_type[t].push_back(&table);
    total += table.ids.size();
  }
  s.node_type_of.assign(total, -1);
  s.index_in_type.assign(total, -1);
  s.type_nodes.resize(num_types);
  s.node_features.resize(num_types);
  for (std::size_t t = 0; t < num_types; ++t) {
    std::vector<std::pair<NodeId, std::pair<const NodeTable*, std::size_t>>> rows;
    for (const NodeTable* table : tables_for_type[t]) {
      for (std::size_t i = 0; i < table->ids.size(); ++i) {
        const NodeId id = table->ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= total) {
          throw GraphError("node id " + std::to_string(id) + " of type '" + s.node_types[t].name +
                           "' outside contiguous range [0, " + std::to_string(total) + ")");
        }
        if (s.node_type_of[static_cast<std::size_t>(id)] != -1) {
          throw GraphError("duplicate node id " + std::to_string(id));
        }
        s.node_type_of[static_cast<std::size_t>(id)] = static_cast<NodeTypeId>(t);
        rows.push_back({id, {table, i}});
      }
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t dim = s.node_types[t].feature_dim;
    ad::Matrix feats(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto [table, i] = rows[r].second;
      s.type_nodes[t].push_back(rows[r].first);
      s.index_in_type[static_cast<std::size_t>(rows[r].first)] = static_cast<std::int32_t>(r);
      auto src = table->features.row(i);
      std::copy(src.begin(), src.end(), feats.row(r).begin());
    }
    s.node_features[t] = std::move(feats);
  }

  // Edges.
  s.edge_src.resize(declared);
  s.edge_dst.resize(declared);
  s.edge_features.resize(declared);
  std::vector<std::vector<double>> feature_rows(declared);
  for (const auto& table : edges) {
    auto it = edge_type_ids.find(table.type);
    if (it == edge_type_ids.end()) throw GraphError("edge table for undeclared type '" + table.type + "'");
    const auto r = static_cast<std::size_t>(it->second);
    const EdgeTypeInfo& et = s.edge_types[r];
    if (table.src.size() != table.dst.size()) {
      throw GraphError("edge table '" + table.type + "': src/dst length mismatch");
    }
    const bool has_features = et.feature_dim > 0;
    if ((has_features && (table.features.rows != table.src.size() || table.features.cols != et.feature_dim)) ||
        (!has_features && table.features.size() != 0)) {
      throw GraphError("feature-dim mismatch for edge type '" + table.type + "': expected " +
                       std::to_string(has_features ? table.src.size() : 0) + "x" +
                       std::to_string(et.feature_dim) + ", got " + table.features.shape_str());
    }
    for (std::size_t e = 0; e < table.src.size(); ++e) {
      for (NodeId v : {table.src[e], table.dst[e]}) {
        if (v < 0 || static_cast<std::size_t>(v) >= total) {
          throw GraphError("dangling node id " + std::to_string(v) + " in edge " + std::to_string(e) +
                           " of type '" + table.type + "'");
        }
      }
      const NodeTypeId ts = s.node_type_of[static_cast<std::size_t>(table.src[e])];
      const NodeTypeId td = s.node_type_of[static_cast<std::size_t>(table.dst[e])];
      if (ts != et.src || td != et.dst) {
        throw GraphError("type mismatch on edge " + std::to_string(e) + " of type '" + table.type +
                         "': " + s.node_types[static_cast<std::size_t>(ts)].name + " -> " +
                         s.node_types[static_cast<std::size_t>(td)].name + ", expected " +
                         s.node_types[static_cast<std::size_t>(et.src)].name + " -> " +
                         s.node_types[static_cast<std::size_t>(et.dst)].name);
      }
    }
    s.edge_src[r].insert(s.edge_src[r].end(), table.src.begin(), table.src.end());
    s.edge_dst[r].insert(s.edge_dst[r].end(), table.dst.begin(), table.dst.end());
    feature_rows[r].insert(feature_rows[r].end(), table.features.data.begin(), table.features.data.end());
  }
  for (std::size_t r = 0; r < declared; ++r) {
    const std::size_t dim = s.edge_types[r].feature_dim;
    if (dim > 0) s.edge_features[r] = ad::Matrix(s.edge_src[r].size(), dim, std::move(feature_rows[r]));
  }

  if (options.add_inverse) {
    for (std::size_t r = 0; r < declared; ++r) {
      EdgeTypeInfo inv = s.edge_types[r];
      inv.name += "^-1";
      std::swap(inv.src, inv.dst);
      inv.inverse_of = static_cast<EdgeTypeId>(r);
      inv.paired = static_cast<EdgeTypeId>(r);
      s.edge_types[r].paired = static_cast<EdgeTypeId>(declared + r);
      s.edge_types.push_back(inv);
    }
  }

  s.adjacency.resize(s.edge_types.size());
  s.edge_features.resize(s.edge_types.size());
  s.edge_src.resize(s.edge_types.size());
  s.edge_dst.resize(s.edge_types.size());
  for (std::size_t r = 0; r < s.edge_types.size(); ++r) {
    const EdgeTypeInfo& et = s.edge_types[r];
    if (et.is_inverse()) {
      const auto base = static_cast<std::size_t>(et.inverse_of);
      s.adjacency[r] = build_csr(total, s.edge_dst[base], s.edge_src[base]);
    } else {
      s.adjacency[r] = build_csr(total, s.edge_src[r], s.edge_dst[r]);
    }
  }
  return HeteroGraph(std::move(s));
}

HeteroGraph HeteroGraph::unchecked(Storage storage) { return HeteroGraph(std::move(storage)); }

std::size_t HeteroGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& c : s_.adjacency) n += c.targets.size();
  return n;
}

std::size_t HeteroGraph::num_input_edges() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < s_.edge_types.size(); ++r)
    if (!s_.edge_types[r].is_inverse()) n += s_.edge_src[r].size();
  return n;
}

std::optional<NodeTypeId> HeteroGraph::find_node_type(std::string_view name) const {
  for (std::size_t t = 0; t < s_.node_types.size(); ++t)
    if (s_.node_types[t].name == name) return static_cast<NodeTypeId>(t);
  return std::nullopt;
}

std::optional<EdgeTypeId> HeteroGraph::find_edge_type(std::string_view name) const {
  for (std::size_t r = 0; r < s_.edge_types.size(); ++r)
    if (s_.edge_types[r].name == name) return static_cast<EdgeTypeId>(r);
  return std::nullopt;
}

void HeteroGraph::check_node(NodeId v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= num_nodes()) {
    throw GraphError("node id " + std::to_string(v) + " out of range [0, " +
                     std::to_string(num_nodes()) + ")");
  }
}

NodeTypeId HeteroGraph::type_of(NodeId v) const {
  check_node(v);
  return s_.node_type_of[static_cast<std::size_t>(v)];
}

std::span<const double> HeteroGraph::feature_row(NodeId v) const {
  return features(type_of(v)).row(index_in_type(v));
}

const ad::Matrix* HeteroGraph::edge_features(EdgeTypeId r) const {
  const EdgeTypeInfo& et = edge_type(r);
  if (et.feature_dim == 0) return nullptr;
  return &s_.edge_features.at(static_cast<std::size_t>(et.feature_source(r)));
}

std::vector<Neighbor> HeteroGraph::neighbors(NodeId v) const {
  check_node(v);
  std::vector<Neighbor> out;
  out.reserve(degree(v));
  for_each_neighbor(v, [&](NodeId u, EdgeTypeId r, std::int64_t e) { out.push_back({u, r, e}); });
  return out;
}

std::size_t HeteroGraph::degree(NodeId v) const {
  check_node(v);
  std::size_t d = 0;
  const auto row = static_cast<std::size_t>(v);
  for (const auto& c : s_.adjacency) d += static_cast<std::size_t>(c.offsets[row + 1] - c.offsets[row]);
  return d;
}

std::vector<std::string> validate(const HeteroGraph& graph) {
  const auto& s = graph.storage();
  std::vector<std::string> report;
  const std::size_t n = s.node_type_of.size();
  const std::size_t num_types = s.node_types.size();

  if (num_types + s.edge_types.size() <= 2) {
    report.push_back("not heterogeneous: " + std::to_string(num_types) + " node types + " +
                     std::to_string(s.edge_types.size()) + " edge types <= 2");
  }
  std::vector<std::size_t> counted(num_types, 0);
  for (std::size_t v = 0; v < n; ++v) {
    const NodeTypeId t = s.node_type_of[v];
    if (t < 0 || static_cast<std::size_t>(t) >= num_types) {
      report.push_back("node " + std::to_string(v) + " has invalid type id " + std::to_string(t));
    } else {
      ++counted[static_cast<std::size_t>(t)];
    }
  }
  for (std::size_t t = 0; t < num_types; ++t) {
    const std::size_t expected = t < s.type_nodes.size() ? s.type_nodes[t].size() : 0;
    if (expected != counted[t]) {
      report.push_back("node type '" + s.node_types[t].name + "': type list has " +
                       std::to_string(expected) + " nodes but " + std::to_string(counted[t]) +
                       " nodes carry the type");
    }
    if (t >= s.node_features.size()) {
      report.push_back("node type '" + s.node_types[t].name + "': missing feature table");
      continue;
    }
    const auto& f = s.node_features[t];
    if (f.rows != counted[t] || f.cols != s.node_types[t].feature_dim) {
      report.push_back("node type '" + s.node_types[t].name + "': feature table is " + f.shape_str() +
                       ", expected (" + std::to_string(counted[t]) + "x" +
                       std::to_string(s.node_types[t].feature_dim) + ")");
    }
  }
  if (s.adjacency.size() != s.edge_types.size()) {
    report.push_back("adjacency count " + std::to_string(s.adjacency.size()) + " != edge type count " +
                     std::to_string(s.edge_types.size()));
  }
  for (std::size_t r = 0; r < std::min(s.adjacency.size(), s.edge_types.size()); ++r) {
    const Csr& c = s.adjacency[r];
    const EdgeTypeInfo& et = s.edge_types[r];
    const std::string label = "edge type '" + et.name + "'";
    if (c.offsets.size() != n + 1) {
      report.push_back(label + ": offsets length " + std::to_string(c.offsets.size()) + ", expected " +
                       std::to_string(n + 1));
      continue;
    }
    bool monotone = c.offsets.front() == 0;
    for (std::size_t i = 0; i + 1 < c.offsets.size(); ++i) monotone = monotone && c.offsets[i] <= c.offsets[i + 1];
    if (!monotone) report.push_back(label + ": CSR offsets are not monotone non-decreasing from 0");
    if (static_cast<std::size_t>(c.offsets.back()) != c.targets.size() || c.edge_ids.size() != c.targets.size()) {
      report.push_back(label + ": offsets end at " + std::to_string(c.offsets.back()) + " but " +
                       std::to_string(c.targets.size()) + " targets / " + std::to_string(c.edge_ids.size()) +
                       " edge ids are stored");
      continue;
    }
    const ad::Matrix* ef = nullptr;
    if (et.feature_dim > 0) {
      const auto src = static_cast<std::size_t>(et.feature_source(static_cast<EdgeTypeId>(r)));
      if (src < s.edge_features.size()) ef = &s.edge_features[src];
      if (!ef || ef->cols != et.feature_dim) {
        report.push_back(label + ": edge feature table missing or not " + std::to_string(et.feature_dim) +
                         " wide");
        ef = nullptr;
      }
    }
    if (!monotone) continue;
    for (std::size_t u = 0; u < n; ++u) {
      for (auto i = c.offsets[u]; i < c.offsets[u + 1]; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const NodeId v = c.targets[idx];
        const std::string edge = label + " edge " + std::to_string(u) + "->" + std::to_string(v);
        if (v < 0 || static_cast<std::size_t>(v) >= n) {
          report.push_back(edge + ": target outside node range [0, " + std::to_string(n) + ")");
          continue;
        }
        if (s.node_type_of[u] != et.src || s.node_type_of[static_cast<std::size_t>(v)] != et.dst) {
          report.push_back(edge + ": endpoint types do not match the edge type");
        }
        if (ef && (c.edge_ids[idx] < 0 || static_cast<std::size_t>(c.edge_ids[idx]) >= ef->rows)) {
          report.push_back(edge + ": edge id " + std::to_string(c.edge_ids[idx]) + " has no feature row");
        }
      }
    }
  }
  return report;
}

void check_task(const HeteroGraph& graph, const QueryTask& task) {
  const auto n = static_cast<NodeId>(graph.num_nodes());
  auto in_range = [&](NodeId v, const char* what) {
    if (v < 0 || v >= n) {
      throw GraphError(std::string("task: ") + what + " node " + std::to_string(v) + " out of range");
    }
  };
  in_range(task.query, "query");
  if (task.target_types.empty()) throw GraphError("task: empty target type set");
  for (NodeTypeId t : task.target_types) {
    if (t < 0 || static_cast<std::size_t>(t) >= graph.num_node_types()) {
      throw GraphError("task: invalid target type id " + std::to_string(t));
    }
  }
  std::unordered_set<NodeId> pos;
  for (NodeId v : task.pos) {
    in_range(v, "pos");
    const NodeTypeId t = graph.type_of(v);
    if (std::find(task.target_types.begin(), task.target_types.end(), t) == task.target_types.end()) {
      throw GraphError("task: positive node " + std::to_string(v) + " has untargeted type '" +
                       graph.node_type(t).name + "'");
    }
    pos.insert(v);
  }
  if (!pos.contains(task.query)) {
    throw GraphError("task: query node " + std::to_string(task.query) + " missing from pos");
  }
  for (NodeId v : task.neg) {
    in_range(v, "neg");
    if (pos.contains(v)) throw GraphError("task: node " + std::to_string(v) + " is both pos and neg");
  }
}

std::vector<NodeId> CommunityResult::member_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(members.size());
  for (const auto& m : members) ids.push_back(m.id);
  return ids;
}

}  // namespace hetcs
