#include "hetcs/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hetcs {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  return {{"layers", c.layers},       {"hidden", c.hidden},     {"heads", c.heads},
          {"unified_dim", c.unified_dim}, {"edge_dim", c.edge_dim}, {"mlp_hidden", c.mlp_width()},
          {"dropout", c.dropout},     {"leaky_slope", c.leaky_slope}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.unified_dim = j.at("unified_dim").get<std::size_t>();
  c.edge_dim = j.at("edge_dim").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.check();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt, const HeteroGraph& graph) {
  json doc;
  doc["format"] = "hetcs-checkpoint";
  doc["version"] = Checkpoint::kVersion;
  doc["config"] = config_json(ckpt.config);
  doc["node_types"] = json::array();
  for (const auto& nt : ckpt.node_types) doc["node_types"].push_back({{"name", nt.name}, {"feature_dim", nt.feature_dim}});
  doc["edge_types"] = ckpt.edge_types;
  doc["seed"] = ckpt.seed;
  doc["mode"] = ckpt.mode;
  doc["gamma"] = ckpt.gamma;
  doc["test_tasks"] = ckpt.test_tasks;
  doc["params"] = json::array();
  for (const auto& [name, m] : ckpt.params.named(graph)) {
    doc["params"].push_back({{"name", name}, {"shape", {m->rows, m->cols}}, {"data", m->data}});
  }
  return doc.dump() + "\n";
}

Checkpoint parse_checkpoint(const std::string& text, const HeteroGraph& graph) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != "hetcs-checkpoint") throw std::invalid_argument("checkpoint: not a hetcs checkpoint");
  if (doc.at("version").get<int>() != Checkpoint::kVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " + doc.at("version").dump());
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(doc.at("config"));
  for (const auto& nt : doc.at("node_types")) {
    ckpt.node_types.push_back({nt.at("name").get<std::string>(), nt.at("feature_dim").get<std::size_t>()});
  }
  ckpt.edge_types = doc.at("edge_types").get<std::vector<std::string>>();
  ckpt.seed = doc.at("seed").get<std::uint64_t>();
  ckpt.mode = doc.at("mode").get<std::string>();
  ckpt.gamma = doc.at("gamma").get<double>();
  ckpt.test_tasks = doc.at("test_tasks").get<std::vector<std::size_t>>();

  if (ckpt.node_types.size() != graph.num_node_types() || ckpt.edge_types.size() != graph.num_edge_types()) {
    throw std::invalid_argument("checkpoint: type registry does not match the graph");
  }
  for (std::size_t t = 0; t < ckpt.node_types.size(); ++t) {
    const auto& g = graph.node_type(static_cast<NodeTypeId>(t));
    if (g.name != ckpt.node_types[t].name || g.feature_dim != ckpt.node_types[t].feature_dim) {
      throw std::invalid_argument("checkpoint: node type " + std::to_string(t) + " is '" + ckpt.node_types[t].name +
                                  "' in the checkpoint but '" + g.name + "' in the graph");
    }
  }
  for (std::size_t r = 0; r < ckpt.edge_types.size(); ++r) {
    if (graph.edge_type(static_cast<EdgeTypeId>(r)).name != ckpt.edge_types[r]) {
      throw std::invalid_argument("checkpoint: edge type " + std::to_string(r) + " mismatch");
    }
  }

  ckpt.params = zero_params(ckpt.config, graph);
  auto named = ckpt.params.named(graph);
  const json& arr = doc.at("params");
  if (arr.size() != named.size()) {
    throw std::invalid_argument("checkpoint: " + std::to_string(arr.size()) + " tensors, expected " +
                                std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& p = arr[i];
    const auto name = p.at("name").get<std::string>();
    const auto shape = p.at("shape").get<std::vector<std::size_t>>();
    auto data = p.at("data").get<std::vector<double>>();
    ad::Matrix& m = *named[i].value;
    if (name != named[i].name || shape.size() != 2 || shape[0] != m.rows || shape[1] != m.cols ||
        data.size() != m.size()) {
      throw std::invalid_argument("checkpoint: tensor '" + name + "' does not match expected '" + named[i].name +
                                  "' " + m.shape_str());
    }
    m.data = std::move(data);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt, const HeteroGraph& graph) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << serialize_checkpoint(ckpt, graph);
}

Checkpoint load_checkpoint(const std::filesystem::path& file, const HeteroGraph& graph) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), graph);
}

}  // namespace hetcs
