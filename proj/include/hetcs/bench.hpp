#pragma once

// Training and query timing on planted graphs of increasing size.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hetcs/model.hpp"
#include "hetcs/synth.hpp"

namespace hetcs {

struct BenchConfig {
  std::vector<std::size_t> sizes{2000, 8000, 32000};
  std::size_t reps = 5;
  /// Training tasks timed per epoch.
  std::size_t tasks_per_epoch = 4;
  /// Queries timed per repetition.
  std::size_t queries = 10;
  std::size_t d_max = 4;
  double gamma = 0.5;
  std::vector<std::size_t> fanouts{20, 10};
  ModelConfig model;
  /// Cross-community edge probability at 2,000 nodes; scaled as 2000/n.
  double p_out = 0.001;
  std::uint64_t seed = 1;
  bool run_full = true;
  bool run_ls = true;
  std::ostream* log = nullptr;
};

struct BenchRow {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  bool skipped = false;
  std::string skip_reason;
  double full_epoch_ms = 0.0;
  double ls_epoch_ms = 0.0;
  double mean_block_nodes = 0.0;
  double predict_ms = 0.0;
  double search_ms = 0.0;
  double full_search_ms = 0.0;
  double mean_search_visited = 0.0;
  double mean_full_visited = 0.0;
  /// Hash of every community returned by search(), independent of timing.
  std::uint64_t community_digest = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::size_t> fanouts;
  std::size_t d_max = 0;
  std::size_t reps = 0;
  std::size_t tasks_per_epoch = 0;
};

/// Medians over `reps` repetitions per cell. Cells that run out of memory
/// are marked skipped.
BenchReport bench(const BenchConfig& config);

std::string bench_report_json(const BenchReport& report);
std::string bench_report_tsv(const BenchReport& report);

}  // namespace hetcs
