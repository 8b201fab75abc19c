#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hetcs/graph.hpp"
#include "hetcs/model.hpp"

namespace hetcs {

/// Trained model plus everything needed to reproduce and query it.
struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelConfig config;
  std::vector<NodeTypeInfo> node_types;
  std::vector<std::string> edge_types;
  std::uint64_t seed = 0;
  std::string mode = "ls";
  /// Validation-selected membership threshold.
  double gamma = 0.5;
  /// Indices into the dataset's task list held out for testing.
  std::vector<std::size_t> test_tasks;
  ModelParams params;
};

/// Versioned JSON: header fields, then every parameter as
/// {name, shape: [rows, cols], data: [...]} with shortest round-trip doubles.
std::string serialize_checkpoint(const Checkpoint& ckpt, const HeteroGraph& graph);
Checkpoint parse_checkpoint(const std::string& text, const HeteroGraph& graph);

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt, const HeteroGraph& graph);
/// Throws std::invalid_argument when the type registries or any parameter
/// shape disagree with `graph` and the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& file, const HeteroGraph& graph);

}  // namespace hetcs
