#include "hetcs/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hetcs {

namespace {

bool sorted_contains(std::span<const NodeId> sorted, NodeId v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

void sort_unique(std::vector<NodeId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

NodeId SampledBlock::local(NodeId global) const {
  auto it = std::lower_bound(global_ids.begin(), global_ids.end(), global);
  if (it == global_ids.end() || *it != global) {
    throw GraphError("node " + std::to_string(global) + " is not in the sampled block");
  }
  return static_cast<NodeId>(it - global_ids.begin());
}

bool SampledBlock::contains(NodeId global) const { return sorted_contains(global_ids, global); }

QueryTask SampledBlock::localize(const QueryTask& task) const {
  QueryTask out;
  out.query = local(task.query);
  for (NodeId v : task.pos) out.pos.push_back(local(v));
  for (NodeId v : task.neg) out.neg.push_back(local(v));
  out.target_types = task.target_types;
  return out;
}

std::vector<NodeId> labeled_nodes(const QueryTask& task) {
  std::vector<NodeId> out{task.query};
  out.insert(out.end(), task.pos.begin(), task.pos.end());
  out.insert(out.end(), task.neg.begin(), task.neg.end());
  sort_unique(out);
  return out;
}

SampledBlock sample_block(const HeteroGraph& graph, const QueryTask& task, std::span<const std::size_t> fanouts,
                          std::uint64_t seed) {
  if (fanouts.empty()) throw std::invalid_argument("sample_block: no fanouts given");
  for (std::size_t f : fanouts) {
    if (f == 0) throw std::invalid_argument("sample_block: fanout must be >= 1");
  }
  const std::size_t L = fanouts.size();
  SampledBlock block;
  block.layers.resize(L + 1);
  block.layers[L] = labeled_nodes(task);
  if (block.layers[L].empty()) throw std::invalid_argument("sample_block: empty labeled set");
  for (NodeId v : block.layers[L]) {
    if (v < 0 || static_cast<std::size_t>(v) >= graph.num_nodes()) {
      throw GraphError("sample_block: labeled node " + std::to_string(v) + " out of range");
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> positions;
  std::vector<std::size_t> picked;
  for (std::size_t l = L; l >= 1; --l) {
    const std::size_t fanout = fanouts[l - 1];
    std::vector<NodeId>& next = block.layers[l - 1];
    for (NodeId v : block.layers[l]) {
      const auto nbrs = graph.neighbors(v);
      if (nbrs.size() <= fanout) {
        for (const auto& nb : nbrs) next.push_back(nb.node);
        continue;
      }
      positions.resize(nbrs.size());
      std::iota(positions.begin(), positions.end(), std::size_t{0});
      picked.clear();
      std::sample(positions.begin(), positions.end(), std::back_inserter(picked), fanout, rng);
      for (std::size_t i : picked) next.push_back(nbrs[i].node);
    }
    sort_unique(next);
  }

  for (const auto& layer : block.layers) block.global_ids.insert(block.global_ids.end(), layer.begin(), layer.end());
  sort_unique(block.global_ids);
  block.graph = induced_subgraph(graph, block.global_ids);
  return block;
}

HeteroGraph induced_subgraph(const HeteroGraph& graph, std::span<const NodeId> nodes) {
  const auto& src = graph.storage();
  HeteroGraph::Storage s;
  s.node_types = src.node_types;
  s.edge_types = src.edge_types;
  const std::size_t n = nodes.size();
  s.node_type_of.resize(n);
  s.index_in_type.resize(n);
  s.type_nodes.resize(src.node_types.size());
  std::vector<std::vector<double>> feats(src.node_types.size());
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId g = nodes[i];
    const NodeTypeId t = graph.type_of(g);
    auto& list = s.type_nodes[static_cast<std::size_t>(t)];
    s.node_type_of[i] = t;
    s.index_in_type[i] = static_cast<std::int32_t>(list.size());
    list.push_back(static_cast<NodeId>(i));
    auto row = graph.feature_row(g);
    feats[static_cast<std::size_t>(t)].insert(feats[static_cast<std::size_t>(t)].end(), row.begin(), row.end());
  }
  for (std::size_t t = 0; t < src.node_types.size(); ++t) {
    s.node_features.emplace_back(s.type_nodes[t].size(), src.node_types[t].feature_dim, std::move(feats[t]));
  }

  s.adjacency.resize(src.edge_types.size());
  s.edge_features = src.edge_features;
  s.edge_src.resize(src.edge_types.size());
  s.edge_dst.resize(src.edge_types.size());
  for (std::size_t r = 0; r < src.edge_types.size(); ++r) {
    const Csr& in = src.adjacency[r];
    Csr& out = s.adjacency[r];
    out.offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = static_cast<std::size_t>(nodes[i]);
      for (auto k = in.offsets[g]; k < in.offsets[g + 1]; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        auto it = std::lower_bound(nodes.begin(), nodes.end(), in.targets[idx]);
        if (it == nodes.end() || *it != in.targets[idx]) continue;
        const auto local = static_cast<NodeId>(it - nodes.begin());
        out.targets.push_back(local);
        out.edge_ids.push_back(in.edge_ids[idx]);
        if (!src.edge_types[r].is_inverse()) {
          s.edge_src[r].push_back(static_cast<NodeId>(i));
          s.edge_dst[r].push_back(local);
        }
      }
      out.offsets[i + 1] = static_cast<std::int64_t>(out.targets.size());
    }
  }
  return HeteroGraph::unchecked(std::move(s));
}

std::vector<NodeId> k_hop_neighborhood(const HeteroGraph& graph, std::span<const NodeId> seeds, std::size_t hops) {
  std::vector<int> dist(graph.num_nodes(), -1);
  std::vector<NodeId> frontier;
  for (NodeId v : seeds) {
    if (dist[static_cast<std::size_t>(v)] < 0) {
      dist[static_cast<std::size_t>(v)] = 0;
      frontier.push_back(v);
    }
  }
  std::vector<NodeId> all = frontier;
  for (std::size_t h = 1; h <= hops; ++h) {
    std::vector<NodeId> next;
    for (NodeId v : frontier) {
      graph.for_each_neighbor(v, [&](NodeId u, EdgeTypeId, std::int64_t) {
        if (dist[static_cast<std::size_t>(u)] < 0) {
          dist[static_cast<std::size_t>(u)] = static_cast<int>(h);
          next.push_back(u);
        }
      });
    }
    all.insert(all.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  sort_unique(all);
  return all;
}

}  // namespace hetcs
