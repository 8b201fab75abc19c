#include "hetcs/bench.hpp"

#include <algorithm>
#include <chrono>
#include <json.hpp>
#include <new>
#include <sstream>

#include "hetcs/adam.hpp"
#include "hetcs/sampler.hpp"
#include "hetcs/search.hpp"
#include "hetcs/trainer.hpp"

namespace hetcs {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

std::uint64_t fnv(std::uint64_t h, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double train_epoch(const HeteroGraph& graph, const MessageIndex& index, const std::vector<QueryTask>& tasks,
                   ModelParams& params, const BenchConfig& config, TrainMode mode, std::size_t rep) {
  ad::Adam adam;
  std::mt19937_64 rng(mix_seed(config.seed, 0xb, rep));
  const auto start = Clock::now();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    ForwardOptions options{true, &rng};
    TaskStep step;
    if (mode == TrainMode::Full) {
      step = task_gradients(graph, index, tasks[i], params, config.model, options);
    } else {
      step = block_gradients(graph, tasks[i], params, config.model, config.fanouts, mix_seed(config.seed, rep, i),
                             options);
    }
    std::vector<ad::ParamRef> refs;
    const auto tensors = params.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) refs.push_back({std::to_string(k), tensors[k], &step.grads[k]});
    adam.step(refs);
  }
  return ms_since(start);
}

BenchRow bench_size(std::size_t n, const BenchConfig& config) {
  BenchRow row;
  row.nodes = n;
  SynthConfig sc = SynthConfig::bibliographic(n);
  sc.p_out = config.p_out * 2000.0 / static_cast<double>(n);
  sc.seed = config.seed;
  sc.queries_per_community = 1;
  const Dataset ds = generate(sc);
  const HeteroGraph& graph = ds.graph;
  row.edges = graph.num_input_edges();

  std::vector<QueryTask> train_tasks(ds.tasks.begin(),
                                     ds.tasks.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(config.tasks_per_epoch, ds.tasks.size())));
  std::vector<QueryTask> queries(
      ds.tasks.begin(), ds.tasks.begin() + static_cast<std::ptrdiff_t>(std::min(config.queries, ds.tasks.size())));
  const MessageIndex index = build_message_index(graph, config.model.edge_dim);
  const ModelParams init = init_params(config.model, graph, config.seed);

  std::vector<double> full_ms, ls_ms;
  for (std::size_t rep = 0; rep < config.reps; ++rep) {
    if (config.run_full) {
      ModelParams p = init;
      full_ms.push_back(train_epoch(graph, index, train_tasks, p, config, TrainMode::Full, rep));
    }
    if (config.run_ls) {
      ModelParams p = init;
      ls_ms.push_back(train_epoch(graph, index, train_tasks, p, config, TrainMode::Ls, rep));
    }
  }
  row.full_epoch_ms = median(full_ms);
  row.ls_epoch_ms = median(ls_ms);
  for (std::size_t i = 0; i < train_tasks.size(); ++i) {
    const auto block = sample_block(graph, train_tasks[i], config.fanouts, mix_seed(config.seed, 0, i));
    row.mean_block_nodes += static_cast<double>(block.global_ids.size()) / static_cast<double>(train_tasks.size());
  }

  std::vector<double> predict_ms, search_ms, full_search_ms;
  std::uint64_t digest = 0xcbf29ce484222325ULL;
  for (const auto& task : queries) {
    const auto start = Clock::now();
    const auto p = predict(init, config.model, graph, index, task.query);
    predict_ms.push_back(ms_since(start));
    SearchConfig bounded{config.gamma, config.d_max, task.target_types};
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      const CommunityResult a = search(graph, task.query, p, bounded);
      const CommunityResult b = full_search(graph, task.query, p, config.gamma, task.target_types);
      search_ms.push_back(a.millis);
      full_search_ms.push_back(b.millis);
      if (rep == 0) {
        row.mean_search_visited += static_cast<double>(a.visited_count) / static_cast<double>(queries.size());
        row.mean_full_visited += static_cast<double>(b.visited_count) / static_cast<double>(queries.size());
        for (const auto& m : a.members) digest = fnv(digest, static_cast<std::uint64_t>(m.id));
        digest = fnv(digest, ~0ULL);
      }
    }
  }
  row.predict_ms = median(predict_ms);
  row.search_ms = median(search_ms);
  row.full_search_ms = median(full_search_ms);
  row.community_digest = digest;
  return row;
}

}  // namespace

BenchReport bench(const BenchConfig& config) {
  config.model.check();
  if (config.fanouts.size() != config.model.layers) {
    throw std::invalid_argument("bench: one fanout per model layer required");
  }
  if (config.reps < 1) throw std::invalid_argument("bench: reps must be >= 1");
  BenchReport report;
  report.fanouts = config.fanouts;
  report.d_max = config.d_max;
  report.reps = config.reps;
  report.tasks_per_epoch = config.tasks_per_epoch;
  for (std::size_t n : config.sizes) {
    BenchRow row;
    try {
      row = bench_size(n, config);
    } catch (const std::bad_alloc&) {
      row = BenchRow{};
      row.nodes = n;
      row.skipped = true;
      row.skip_reason = "out of memory";
    }
    if (config.log) {
      *config.log << "bench nodes=" << row.nodes << " edges=" << row.edges << " full_ms=" << row.full_epoch_ms
                  << " ls_ms=" << row.ls_epoch_ms << " search_ms=" << row.search_ms
                  << " full_search_ms=" << row.full_search_ms << (row.skipped ? " skipped" : "") << std::endl;
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string bench_report_json(const BenchReport& report) {
  nlohmann::ordered_json j;
  j["fanouts"] = report.fanouts;
  j["d_max"] = report.d_max;
  j["reps"] = report.reps;
  j["tasks_per_epoch"] = report.tasks_per_epoch;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json o;
    o["nodes"] = r.nodes;
    o["edges"] = r.edges;
    if (r.skipped) {
      o["skipped"] = r.skip_reason;
    } else {
      o["full_epoch_ms"] = r.full_epoch_ms;
      o["ls_epoch_ms"] = r.ls_epoch_ms;
      o["mean_block_nodes"] = r.mean_block_nodes;
      o["predict_ms"] = r.predict_ms;
      o["search_ms"] = r.search_ms;
      o["full_search_ms"] = r.full_search_ms;
      o["mean_search_visited"] = r.mean_search_visited;
      o["mean_full_visited"] = r.mean_full_visited;
      o["community_digest"] = r.community_digest;
    }
    j["rows"].push_back(std::move(o));
  }
  return j.dump();
}

std::string bench_report_tsv(const BenchReport& report) {
  std::ostringstream os;
  os << "nodes\tedges\tfull_epoch_ms\tls_epoch_ms\tpredict_ms\tsearch_ms\tfull_search_ms\n";
  for (const auto& r : report.rows) {
    os << r.nodes << '\t' << r.edges << '\t';
    if (r.skipped) {
      os << "skipped\tskipped\tskipped\tskipped\tskipped\n";
    } else {
      os << r.full_epoch_ms << '\t' << r.ls_epoch_ms << '\t' << r.predict_ms << '\t' << r.search_ms << '\t'
         << r.full_search_ms << '\n';
    }
  }
  return os.str();
}

}  // namespace hetcs
