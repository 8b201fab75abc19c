#include "hetcs/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "hetcs/metrics.hpp"
#include "hetcs/search.hpp"

namespace hetcs {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

bool has_type(const std::vector<NodeTypeId>& types, NodeTypeId t) {
  return types.empty() || std::find(types.begin(), types.end(), t) != types.end();
}

std::vector<NodeId> targeted_nodes(const HeteroGraph& graph, const std::vector<NodeTypeId>& types) {
  std::vector<NodeId> out;
  for (std::size_t t = 0; t < graph.num_node_types(); ++t) {
    if (!has_type(types, static_cast<NodeTypeId>(t))) continue;
    const auto nodes = graph.nodes_of_type(static_cast<NodeTypeId>(t));
    out.insert(out.end(), nodes.begin(), nodes.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("invalid depth '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<NodeId> ground_truth(const HeteroGraph& graph, const QueryTask& task,
                                 const std::vector<Community>& communities) {
  std::vector<NodeId> truth;
  const Community* home = nullptr;
  for (const auto& c : communities) {
    if (std::find(c.members.begin(), c.members.end(), task.query) != c.members.end()) {
      home = &c;
      break;
    }
  }
  if (home) {
    for (NodeId v : home->members) {
      if (has_type(task.target_types, graph.type_of(v))) truth.push_back(v);
    }
  } else {
    truth = task.pos;
    truth.push_back(task.query);
  }
  std::sort(truth.begin(), truth.end());
  truth.erase(std::unique(truth.begin(), truth.end()), truth.end());
  return truth;
}

EvalReport evaluate(const HeteroGraph& graph, const Checkpoint& checkpoint, const std::vector<QueryTask>& tasks,
                    const std::vector<Community>& communities, const std::vector<std::size_t>& which,
                    const EvalConfig& config) {
  check_shapes(checkpoint.params, checkpoint.config, graph);
  if (config.depths.empty()) throw std::invalid_argument("evaluate: no search depth given");
  const double gamma = config.gamma.value_or(checkpoint.gamma);
  std::vector<std::size_t> ids = which;
  if (ids.empty()) {
    ids.resize(tasks.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  }

  const MessageIndex index = build_message_index(graph, checkpoint.config.edge_dim);
  EvalReport report;
  for (const auto& d : config.depths) report.runs.push_back(EvalRun{d, gamma, {}, 0, 0, 0, 0, 0});

  for (std::size_t i : ids) {
    QueryTask task = tasks.at(i);
    if (config.target_types) {
      if (!has_type(*config.target_types, graph.type_of(task.query))) continue;
      task.target_types = *config.target_types;
    }
    const auto truth = ground_truth(graph, task, communities);
    const auto universe = targeted_nodes(graph, task.target_types);
    const auto start = std::chrono::steady_clock::now();
    const auto p = predict(checkpoint.params, checkpoint.config, graph, index, task.query);
    const double predict_ms = elapsed_ms(start);
    for (auto& run : report.runs) {
      SearchConfig sc{gamma, run.d_max, task.target_types};
      const CommunityResult r = search(graph, task.query, p, sc);
      auto pred = r.member_ids();
      // q is always returned; it only counts when it belongs to the scored types.
      std::erase_if(pred, [&](NodeId v) { return !has_type(task.target_types, graph.type_of(v)); });
      TaskEval e;
      e.task = i;
      e.query = task.query;
      e.f1 = f1_score(pred, truth);
      e.jaccard = jaccard(pred, truth);
      e.nmi = nmi(pred, truth, universe);
      e.members = r.members.size();
      e.predict_ms = predict_ms;
      e.search_ms = r.millis;
      run.tasks.push_back(e);
    }
  }

  for (auto& run : report.runs) {
    if (run.tasks.empty()) continue;
    std::vector<double> latency;
    for (const auto& e : run.tasks) {
      run.mean_f1 += e.f1;
      run.mean_jaccard += e.jaccard;
      run.mean_nmi += e.nmi;
      latency.push_back(e.predict_ms + e.search_ms);
    }
    const auto n = static_cast<double>(run.tasks.size());
    run.mean_f1 /= n;
    run.mean_jaccard /= n;
    run.mean_nmi /= n;
    for (double l : latency) run.mean_query_ms += l / n;
    std::sort(latency.begin(), latency.end());
    const std::size_t m = latency.size();
    run.median_query_ms = m % 2 ? latency[m / 2] : 0.5 * (latency[m / 2 - 1] + latency[m / 2]);
  }
  for (std::size_t r = 1; r < report.runs.size(); ++r) {
    if (report.runs[r].mean_f1 > report.runs[report.best_f1].mean_f1) report.best_f1 = r;
    if (report.runs[r].mean_jaccard > report.runs[report.best_jaccard].mean_jaccard) report.best_jaccard = r;
    if (report.runs[r].mean_nmi > report.runs[report.best_nmi].mean_nmi) report.best_nmi = r;
  }
  return report;
}

std::vector<std::optional<std::size_t>> parse_depths(const std::string& text) {
  if (text == "inf" || text == "full") return {std::nullopt};
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {parse_size(text)};
  const std::size_t lo = parse_size(text.substr(0, dots));
  const std::size_t hi = parse_size(text.substr(dots + 2));
  if (lo > hi) throw std::invalid_argument("empty depth range '" + text + "'");
  std::vector<std::optional<std::size_t>> out;
  for (std::size_t d = lo; d <= hi; ++d) out.emplace_back(d);
  return out;
}

std::string eval_report_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  auto depth = [](const std::optional<std::size_t>& d) { return d ? ordered_json(*d) : ordered_json(nullptr); };
  ordered_json j;
  j["runs"] = ordered_json::array();
  for (const auto& run : report.runs) {
    ordered_json r;
    r["d_max"] = depth(run.d_max);
    r["gamma"] = run.gamma;
    r["num_tasks"] = run.tasks.size();
    r["mean_f1"] = run.mean_f1;
    r["mean_jaccard"] = run.mean_jaccard;
    r["mean_nmi"] = run.mean_nmi;
    r["mean_query_ms"] = run.mean_query_ms;
    r["median_query_ms"] = run.median_query_ms;
    r["tasks"] = ordered_json::array();
    for (const auto& e : run.tasks) {
      r["tasks"].push_back({{"task", e.task},
                            {"query", e.query},
                            {"f1", e.f1},
                            {"jaccard", e.jaccard},
                            {"nmi", e.nmi},
                            {"members", e.members},
                            {"predict_ms", e.predict_ms},
                            {"search_ms", e.search_ms}});
    }
    j["runs"].push_back(std::move(r));
  }
  if (!report.runs.empty()) {
    const auto& runs = report.runs;
    j["best"] = {{"f1", {{"d_max", depth(runs[report.best_f1].d_max)}, {"value", runs[report.best_f1].mean_f1}}},
                 {"jaccard",
                  {{"d_max", depth(runs[report.best_jaccard].d_max)}, {"value", runs[report.best_jaccard].mean_jaccard}}},
                 {"nmi", {{"d_max", depth(runs[report.best_nmi].d_max)}, {"value", runs[report.best_nmi].mean_nmi}}}};
  }
  return j.dump();
}

std::string eval_report_tsv(const EvalReport& report) {
  std::ostringstream os;
  os << "d_max\tgamma\ttask\tquery\tf1\tjaccard\tnmi\tmembers\tms\n";
  for (const auto& run : report.runs) {
    for (const auto& e : run.tasks) {
      os << (run.d_max ? std::to_string(*run.d_max) : "inf") << '\t' << run.gamma << '\t' << e.task << '\t' << e.query
         << '\t' << e.f1 << '\t' << e.jaccard << '\t' << e.nmi << '\t' << e.members << '\t'
         << e.predict_ms + e.search_ms << '\n';
    }
  }
  return os.str();
}

}  // namespace hetcs
