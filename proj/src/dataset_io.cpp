#include "hetcs/dataset_io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace hetcs {

namespace fs = std::filesystem;
using nlohmann::json;

FormatError::FormatError(const fs::path& file, std::size_t line, const std::string& what)
    : GraphError(file.string() + ":" + std::to_string(line) + ": " + what) {}

FormatError::FormatError(const fs::path& file, const std::string& what)
    : GraphError(file.string() + ": " + what) {}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  if (token.empty()) return false;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

// Calls row(line_no, fields) for every line; blank lines are malformed.
template <typename F>
void for_each_tsv_row(const fs::path& file, F&& row) {
  std::ifstream in(file);
  if (!in) throw FormatError(file, "cannot open file");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw FormatError(file, line_no, "empty row");
    row(line_no, split_tabs(line));
  }
}

void put_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError(file, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(file, e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw GraphError("cannot write " + file.string());
  out << text;
}

void require_keys(const fs::path& file, const json& obj, const std::set<std::string>& allowed,
                  const std::set<std::string>& required, const std::string& where) {
  if (!obj.is_object()) throw FormatError(file, where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw FormatError(file, where + ": unknown key '" + key + "'");
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) throw FormatError(file, where + ": missing key '" + key + "'");
  }
}

std::vector<NodeId> id_array(const fs::path& file, const json& v, const std::string& where) {
  if (!v.is_array()) throw FormatError(file, where + ": expected an array of node ids");
  std::vector<NodeId> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) throw FormatError(file, where + ": non-integer node id");
    out.push_back(x.get<NodeId>());
  }
  return out;
}

}  // namespace

GraphSchema read_schema(const fs::path& file) {
  const json doc = read_json(file);
  require_keys(file, doc, {"node_types", "edge_types"}, {"node_types", "edge_types"}, "schema");
  GraphSchema schema;
  for (const auto& nt : doc.at("node_types")) {
    require_keys(file, nt, {"name", "feature_dim"}, {"name", "feature_dim"}, "node type");
    schema.node_types.push_back({nt.at("name").get<std::string>(), nt.at("feature_dim").get<std::size_t>()});
  }
  for (const auto& et : doc.at("edge_types")) {
    require_keys(file, et, {"name", "src", "dst", "feature_dim"}, {"name", "src", "dst"}, "edge type");
    schema.edge_types.push_back({et.at("name").get<std::string>(), et.at("src").get<std::string>(),
                                 et.at("dst").get<std::string>(), et.value("feature_dim", std::size_t{0})});
  }
  return schema;
}

void write_schema(const fs::path& file, const GraphSchema& schema) {
  json doc;
  doc["node_types"] = json::array();
  for (const auto& nt : schema.node_types) {
    doc["node_types"].push_back({{"name", nt.name}, {"feature_dim", nt.feature_dim}});
  }
  doc["edge_types"] = json::array();
  for (const auto& et : schema.edge_types) {
    json e = {{"name", et.name}, {"src", et.src}, {"dst", et.dst}};
    if (et.feature_dim > 0) e["feature_dim"] = et.feature_dim;
    doc["edge_types"].push_back(e);
  }
  write_text(file, doc.dump(2) + "\n");
}

GraphSchema schema_of(const HeteroGraph& graph) {
  GraphSchema schema;
  schema.node_types = graph.node_types();
  for (const auto& et : graph.edge_types()) {
    if (et.is_inverse()) continue;
    schema.edge_types.push_back({et.name, graph.node_type(et.src).name, graph.node_type(et.dst).name,
                                 et.feature_dim});
  }
  return schema;
}

NodeTable read_node_table(const fs::path& file, const NodeTypeInfo& type) {
  NodeTable table;
  table.type = type.name;
  std::vector<double> feats;
  for_each_tsv_row(file, [&](std::size_t line, const std::vector<std::string_view>& fields) {
    if (fields.size() != 1 + type.feature_dim) {
      throw FormatError(file, line, "expected " + std::to_string(1 + type.feature_dim) +
                                        " fields (node_id + " + std::to_string(type.feature_dim) +
                                        " features), got " + std::to_string(fields.size()));
    }
    NodeId id = 0;
    if (!parse_number(fields[0], id) || id < 0) {
      throw FormatError(file, line, "invalid node id '" + std::string(fields[0]) + "'");
    }
    table.ids.push_back(id);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      if (!parse_number(fields[i], v)) {
        throw FormatError(file, line, "invalid feature value '" + std::string(fields[i]) + "'");
      }
      feats.push_back(v);
    }
  });
  table.features = ad::Matrix(table.ids.size(), type.feature_dim, std::move(feats));
  return table;
}

EdgeTable read_edge_table(const fs::path& file, const GraphSchema::EdgeDecl& type) {
  EdgeTable table;
  table.type = type.name;
  std::vector<double> feats;
  for_each_tsv_row(file, [&](std::size_t line, const std::vector<std::string_view>& fields) {
    if (fields.size() != 2 + type.feature_dim) {
      throw FormatError(file, line, "expected " + std::to_string(2 + type.feature_dim) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    NodeId src = 0, dst = 0;
    if (!parse_number(fields[0], src) || !parse_number(fields[1], dst) || src < 0 || dst < 0) {
      throw FormatError(file, line, "invalid endpoint ids");
    }
    table.src.push_back(src);
    table.dst.push_back(dst);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      double v = 0.0;
      if (!parse_number(fields[i], v)) {
        throw FormatError(file, line, "invalid feature value '" + std::string(fields[i]) + "'");
      }
      feats.push_back(v);
    }
  });
  if (type.feature_dim > 0) table.features = ad::Matrix(table.src.size(), type.feature_dim, std::move(feats));
  return table;
}

std::vector<QueryTask> read_tasks(const fs::path& file, const HeteroGraph& graph) {
  const json doc = read_json(file);
  if (!doc.is_array()) throw FormatError(file, "expected an array of tasks");
  std::vector<QueryTask> tasks;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "task " + std::to_string(i);
    const json& t = doc[i];
    require_keys(file, t, {"query", "pos", "neg", "target_types"}, {"query", "pos", "neg", "target_types"}, where);
    QueryTask task;
    if (!t.at("query").is_number_integer()) throw FormatError(file, where + ": query must be an integer");
    task.query = t.at("query").get<NodeId>();
    task.pos = id_array(file, t.at("pos"), where + ".pos");
    task.neg = id_array(file, t.at("neg"), where + ".neg");
    if (!t.at("target_types").is_array()) throw FormatError(file, where + ": target_types must be an array");
    for (const auto& name : t.at("target_types")) {
      if (!name.is_string()) throw FormatError(file, where + ": target type names must be strings");
      auto id = graph.find_node_type(name.get<std::string>());
      if (!id) throw FormatError(file, where + ": unknown node type '" + name.get<std::string>() + "'");
      task.target_types.push_back(*id);
    }
    try {
      check_task(graph, task);
    } catch (const GraphError& e) {
      throw FormatError(file, where + ": " + e.what());
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void write_tasks(const fs::path& file, const HeteroGraph& graph, const std::vector<QueryTask>& tasks) {
  json doc = json::array();
  for (const auto& t : tasks) {
    json types = json::array();
    for (NodeTypeId id : t.target_types) types.push_back(graph.node_type(id).name);
    doc.push_back({{"query", t.query}, {"pos", t.pos}, {"neg", t.neg}, {"target_types", types}});
  }
  write_text(file, doc.dump() + "\n");
}

std::vector<Community> read_communities(const fs::path& file, const HeteroGraph& graph) {
  const json doc = read_json(file);
  if (!doc.is_array()) throw FormatError(file, "expected an array of communities");
  std::vector<Community> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "community " + std::to_string(i);
    require_keys(file, doc[i], {"id", "members"}, {"id", "members"}, where);
    Community c;
    c.id = doc[i].at("id").get<std::int32_t>();
    c.members = id_array(file, doc[i].at("members"), where);
    for (NodeId v : c.members) {
      if (v < 0 || static_cast<std::size_t>(v) >= graph.num_nodes()) {
        throw FormatError(file, where + ": node " + std::to_string(v) + " out of range");
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_communities(const fs::path& file, const std::vector<Community>& communities) {
  json doc = json::array();
  for (const auto& c : communities) doc.push_back({{"id", c.id}, {"members", c.members}});
  write_text(file, doc.dump() + "\n");
}

Dataset load_dataset(const fs::path& dir, BuildOptions options) {
  Dataset ds;
  ds.schema = read_schema(dir / "schema.json");
  std::vector<NodeTable> nodes;
  for (const auto& nt : ds.schema.node_types) nodes.push_back(read_node_table(dir / ("nodes_" + nt.name + ".tsv"), nt));
  std::vector<EdgeTable> edges;
  for (const auto& et : ds.schema.edge_types) edges.push_back(read_edge_table(dir / ("edges_" + et.name + ".tsv"), et));
  ds.graph = HeteroGraph::build(ds.schema, nodes, edges, options);
  if (fs::exists(dir / "tasks.json")) ds.tasks = read_tasks(dir / "tasks.json", ds.graph);
  if (fs::exists(dir / "communities.json")) ds.communities = read_communities(dir / "communities.json", ds.graph);
  return ds;
}

void save_dataset(const fs::path& dir, const HeteroGraph& graph, const std::vector<QueryTask>& tasks,
                  const std::vector<Community>& communities) {
  fs::create_directories(dir);
  const GraphSchema schema = schema_of(graph);
  write_schema(dir / "schema.json", schema);
  const auto& s = graph.storage();
  for (std::size_t t = 0; t < graph.num_node_types(); ++t) {
    std::string text;
    const auto& feats = graph.features(static_cast<NodeTypeId>(t));
    const auto ids = graph.nodes_of_type(static_cast<NodeTypeId>(t));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      text += std::to_string(ids[i]);
      for (double v : feats.row(i)) {
        text += '\t';
        put_double(text, v);
      }
      text += '\n';
    }
    write_text(dir / ("nodes_" + graph.node_type(static_cast<NodeTypeId>(t)).name + ".tsv"), text);
  }
  for (std::size_t r = 0; r < graph.num_edge_types(); ++r) {
    const auto& et = graph.edge_type(static_cast<EdgeTypeId>(r));
    if (et.is_inverse()) continue;
    std::string text;
    const ad::Matrix* feats = graph.edge_features(static_cast<EdgeTypeId>(r));
    for (std::size_t e = 0; e < s.edge_src[r].size(); ++e) {
      text += std::to_string(s.edge_src[r][e]);
      text += '\t';
      text += std::to_string(s.edge_dst[r][e]);
      if (feats) {
        for (double v : feats->row(e)) {
          text += '\t';
          put_double(text, v);
        }
      }
      text += '\n';
    }
    write_text(dir / ("edges_" + et.name + ".tsv"), text);
  }
  write_tasks(dir / "tasks.json", graph, tasks);
  if (!communities.empty()) write_communities(dir / "communities.json", communities);
}

std::vector<NodeTypeId> parse_type_list(const HeteroGraph& graph, const std::string& list) {
  std::vector<NodeTypeId> out;
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    std::optional<NodeTypeId> match = graph.find_node_type(token);
    if (!match) {
      for (std::size_t t = 0; t < graph.num_node_types(); ++t) {
        if (graph.node_type(static_cast<NodeTypeId>(t)).name.starts_with(token)) {
          if (match) throw GraphError("ambiguous node type prefix '" + token + "'");
          match = static_cast<NodeTypeId>(t);
        }
      }
    }
    if (!match) throw GraphError("unknown node type '" + token + "'");
    if (std::find(out.begin(), out.end(), *match) == out.end()) out.push_back(*match);
  }
  if (out.empty()) throw GraphError("empty node type list");
  return out;
}

}  // namespace hetcs
