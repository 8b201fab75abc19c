#pragma once

// Batch evaluation of a checkpoint: predict, search, and score each task
// against its ground-truth community.

#include <optional>
#include <string>
#include <vector>

#include "hetcs/checkpoint.hpp"
#include "hetcs/dataset_io.hpp"
#include "hetcs/graph.hpp"

namespace hetcs {

struct EvalConfig {
  /// Threshold; the checkpoint's value when unset.
  std::optional<double> gamma;
  /// One run per entry; nullopt is an unbounded search.
  std::vector<std::optional<std::size_t>> depths{std::nullopt};
  /// Replaces every task's target types when set. Tasks whose query node is
  /// not of a listed type are skipped.
  std::optional<std::vector<NodeTypeId>> target_types;
};

struct TaskEval {
  std::size_t task = 0;
  NodeId query = 0;
  double f1 = 0.0;
  double jaccard = 0.0;
  double nmi = 0.0;
  std::size_t members = 0;
  double predict_ms = 0.0;
  double search_ms = 0.0;
};

struct EvalRun {
  std::optional<std::size_t> d_max;
  double gamma = 0.5;
  std::vector<TaskEval> tasks;
  double mean_f1 = 0.0;
  double mean_jaccard = 0.0;
  double mean_nmi = 0.0;
  double mean_query_ms = 0.0;
  double median_query_ms = 0.0;
};

struct EvalReport {
  std::vector<EvalRun> runs;
  /// Index into `runs` of the best run per metric.
  std::size_t best_f1 = 0;
  std::size_t best_jaccard = 0;
  std::size_t best_nmi = 0;
};

/// Community containing q restricted to the task's target types, or the
/// task's positives when no communities are given.
std::vector<NodeId> ground_truth(const HeteroGraph& graph, const QueryTask& task,
                                 const std::vector<Community>& communities);

/// Runs every task index in `which` (all tasks when empty).
EvalReport evaluate(const HeteroGraph& graph, const Checkpoint& checkpoint, const std::vector<QueryTask>& tasks,
                    const std::vector<Community>& communities, const std::vector<std::size_t>& which,
                    const EvalConfig& config);

/// Parses "7" or "2..10" into a list of depths; "inf" means unbounded.
std::vector<std::optional<std::size_t>> parse_depths(const std::string& text);

std::string eval_report_json(const EvalReport& report);
/// One row per (run, task): d_max gamma task query f1 jaccard nmi members ms.
std::string eval_report_tsv(const EvalReport& report);

}  // namespace hetcs
