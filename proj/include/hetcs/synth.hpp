#pragma once

// Planted-community heterogeneous graphs with query tasks and ground truth.

#include <cstdint>
#include <string>
#include <vector>

#include "hetcs/dataset_io.hpp"
#include "hetcs/graph.hpp"

namespace hetcs {

struct SynthNodeType {
  std::string name;
  std::size_t count = 0;
  std::size_t feature_dim = 0;
  /// Nodes of this type in each planted community.
  std::size_t community_size = 0;
};

struct SynthEdgeType {
  std::string name;
  std::string src;
  std::string dst;
};

struct SynthConfig {
  std::vector<SynthNodeType> node_types;
  std::vector<SynthEdgeType> edge_types;
  std::size_t communities = 8;
  double p_in = 0.3;
  double p_out = 0.01;
  /// Norm of each community's feature mean.
  double signal = 2.0;
  std::uint64_t seed = 1;
  std::size_t queries_per_community = 10;
  /// Fraction of a community's targeted members labeled positive.
  double pos_fraction = 0.3;
  std::vector<std::string> target_types{"author", "paper"};
  std::size_t max_retries = 100;

  /// Author/paper/term/venue schema with writes, cites, has_term and
  /// published_in edges (eight types with inverses). Counts scale with `nodes`; the number
  /// of communities grows with it while community sizes stay fixed, and
  /// p_out scales as 2000/nodes.
  static SynthConfig bibliographic(std::size_t nodes = 2000);

  /// Throws std::invalid_argument on an infeasible configuration.
  void check() const;
};

/// Graph, tasks and planted communities. Deterministic for a fixed seed.
/// Every community's induced subgraph is connected; wiring is redrawn up to
/// max_retries times before giving up with std::runtime_error.
Dataset generate(const SynthConfig& config);

}  // namespace hetcs
