#pragma once

// Per-task supervised training of the membership model, full-graph or on
// sampled subgraphs, with validation-driven threshold selection.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hetcs/checkpoint.hpp"
#include "hetcs/graph.hpp"
#include "hetcs/model.hpp"

namespace hetcs {

enum class TrainMode { Full, Ls };

std::string to_string(TrainMode mode);
/// "full" or "ls"; throws std::invalid_argument otherwise.
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  TrainMode mode = TrainMode::Ls;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  /// f_1..f_L; must have one entry per model layer (ls mode).
  std::vector<std::size_t> fanouts{20, 10};
  double train_ratio = 0.70;
  double val_ratio = 0.15;
  double test_ratio = 0.15;
  std::uint64_t seed = 0;
  /// Use at most this many training tasks per epoch (0 = all).
  std::size_t tasks_per_epoch = 0;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
  /// When set, the best checkpoint is written here whenever it improves.
  std::optional<std::filesystem::path> checkpoint_path;

  void check(const ModelConfig& model) const;
};

struct TaskSplit {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle of task indices cut by the ratios.
TaskSplit split_tasks(std::size_t count, double train_ratio, double val_ratio, std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_f1 = 0.0;
  double gamma = 0.5;
  double millis = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  double gamma = 0.5;
  std::string checkpoint_path;
  TaskSplit split;
};

std::string train_report_json(const TrainReport& report);

struct TrainResult {
  TrainReport report;
  Checkpoint checkpoint;
};

/// Labels of the labeled nodes of a task: 1 for q and pos, 0 for neg.
struct LabeledSet {
  std::vector<NodeId> ids;
  std::vector<double> labels;
};
LabeledSet labeled_set(const QueryTask& task);

/// Mean −[y log p + (1−y) log(1−p)] over `ids`, p clamped to [1e-12, 1−1e-12].
/// Throws std::invalid_argument on a non-binary label or an empty id list.
double bce_loss(std::span<const double> probabilities, std::span<const double> labels,
                std::span<const NodeId> ids);

struct Threshold {
  double gamma = 0.5;
  double f1 = 0.0;
};

/// Candidates are midpoints between consecutive distinct values of
/// {0, 1} ∪ all probabilities; the one with the highest mean F1 over tasks
/// (prediction p > γ vs label 1) wins, ties going to the smallest γ.
Threshold select_threshold(const std::vector<std::vector<double>>& probabilities,
                           const std::vector<std::vector<double>>& labels);

struct TaskStep {
  double loss = 0.0;
  /// One gradient per parameter tensor, in ModelParams::tensors() order.
  std::vector<ad::Matrix> grads;
  /// Model output on the task's labeled nodes (ascending global id).
  std::vector<double> labeled_probabilities;
};

/// Loss and gradients of one task on `graph`.
TaskStep task_gradients(const HeteroGraph& graph, const MessageIndex& index, const QueryTask& task,
                        const ModelParams& params, const ModelConfig& config, const ForwardOptions& options = {});

/// Loss and gradients of one task on a block sampled with `fanouts`.
TaskStep block_gradients(const HeteroGraph& graph, const QueryTask& task, const ModelParams& params,
                         const ModelConfig& config, std::span<const std::size_t> fanouts, std::uint64_t sample_seed,
                         const ForwardOptions& options = {});

/// Runs training and returns the report and the best checkpoint.
TrainResult train(const HeteroGraph& graph, const std::vector<QueryTask>& tasks, const ModelConfig& model,
                  const TrainConfig& config);

/// Validation pass: probabilities and labels over each task's labeled nodes.
Threshold validate_threshold(const HeteroGraph& graph, const MessageIndex& index, const std::vector<QueryTask>& tasks,
                             std::span<const std::size_t> which, const ModelParams& params, const ModelConfig& config);

/// Seed mixing for per-(epoch, task) randomness.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

}  // namespace hetcs
