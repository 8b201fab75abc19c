#pragma once

// Set-overlap community quality measures.

#include <span>
#include <vector>

#include "hetcs/graph.hpp"

namespace hetcs {

/// Harmonic mean of precision and recall. 1 when both sets are empty, 0 when
/// exactly one is. Duplicates are ignored.
double f1_score(std::span<const NodeId> pred, std::span<const NodeId> truth);

/// |pred ∩ truth| / |pred ∪ truth|; 1 when both are empty.
double jaccard(std::span<const NodeId> pred, std::span<const NodeId> truth);

/// Normalised mutual information 2 I(A;B) / (H(A) + H(B)) between the binary
/// membership partitions the two sets induce on `universe`. Both sets must be
/// subsets of the universe. Throws std::invalid_argument on an empty universe
/// or a set element outside it.
double nmi(std::span<const NodeId> pred, std::span<const NodeId> truth, std::span<const NodeId> universe);

}  // namespace hetcs
