#include "hetcs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hetcs {

namespace {

// Calls f(i, j) for each pair of an na × nb block kept with probability p,
// jumping between kept pairs with geometric gaps.
template <typename F>
void bernoulli_block(std::mt19937_64& rng, double p, std::size_t na, std::size_t nb, F&& f) {
  const auto total = static_cast<std::int64_t>(na * nb);
  if (p <= 0.0 || total == 0) return;
  if (p >= 1.0) {
    for (std::int64_t k = 0; k < total; ++k) f(static_cast<std::size_t>(k) / nb, static_cast<std::size_t>(k) % nb);
    return;
  }
  std::geometric_distribution<std::int64_t> gap(p);
  for (std::int64_t k = gap(rng); k < total; k += 1 + gap(rng)) {
    f(static_cast<std::size_t>(k) / nb, static_cast<std::size_t>(k) % nb);
  }
}

struct Dsu {
  std::vector<std::size_t> parent;
  explicit Dsu(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

std::size_t type_index(const SynthConfig& c, const std::string& name) {
  for (std::size_t t = 0; t < c.node_types.size(); ++t) {
    if (c.node_types[t].name == name) return t;
  }
  throw std::invalid_argument("synth: unknown node type '" + name + "'");
}

}  // namespace

SynthConfig SynthConfig::bibliographic(std::size_t nodes) {
  if (nodes < 100) throw std::invalid_argument("synth: need at least 100 nodes");
  const double scale = static_cast<double>(nodes) / 2000.0;
  SynthConfig c;
  c.communities = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(8.0 * scale)));
  const std::size_t authors = nodes * 2 / 5, papers = nodes * 2 / 5, terms = nodes * 3 / 20;
  const std::size_t venues = nodes - authors - papers - terms;
  auto per = [&](std::size_t count) { return count / c.communities; };
  c.node_types = {{"author", authors, 16, per(authors)},
                  {"paper", papers, 16, per(papers)},
                  {"term", terms, 8, per(terms)},
                  {"venue", venues, 8, per(venues)}};
  c.edge_types = {{"writes", "author", "paper"},
                  {"cites", "paper", "paper"},
                  {"has_term", "paper", "term"},
                  {"published_in", "paper", "venue"}};
  c.p_out = 0.01 / scale;
  return c;
}

void SynthConfig::check() const {
  if (node_types.empty()) throw std::invalid_argument("synth: no node types");
  if (communities < 1) throw std::invalid_argument("synth: need at least one community");
  if (!(p_in > p_out && p_out >= 0.0 && p_in <= 1.0)) {
    throw std::invalid_argument("synth: need 0 <= p_out < p_in <= 1");
  }
  if (!(signal >= 0.0)) throw std::invalid_argument("synth: signal must be >= 0");
  if (!(pos_fraction > 0.0 && pos_fraction <= 1.0)) throw std::invalid_argument("synth: pos fraction must be in (0, 1]");
  for (const auto& t : node_types) {
    if (t.feature_dim == 0) throw std::invalid_argument("synth: type '" + t.name + "' needs features");
    if (t.community_size * communities > t.count) {
      throw std::invalid_argument("synth: " + std::to_string(communities) + " communities of " +
                                  std::to_string(t.community_size) + " '" + t.name + "' nodes exceed the " +
                                  std::to_string(t.count) + " available");
    }
  }
  for (const auto& e : edge_types) {
    type_index(*this, e.src);
    type_index(*this, e.dst);
  }
  if (target_types.empty()) throw std::invalid_argument("synth: no target types");
  std::size_t targeted = 0;
  for (const auto& name : target_types) targeted += node_types[type_index(*this, name)].community_size;
  if (targeted == 0) throw std::invalid_argument("synth: communities hold no targeted nodes");
}

Dataset generate(const SynthConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  const std::size_t T = config.node_types.size();
  const std::size_t C = config.communities;

  // Global ids: types are contiguous; inside a type, communities come first
  // in blocks of community_size, then unassigned nodes.
  std::vector<NodeId> base(T + 1, 0);
  for (std::size_t t = 0; t < T; ++t) base[t + 1] = base[t] + static_cast<NodeId>(config.node_types[t].count);
  auto first = [&](std::size_t t, std::size_t c) {
    return base[t] + static_cast<NodeId>(c * config.node_types[t].community_size);
  };
  // Group g < C is community g; group C is the unassigned remainder.
  auto group_start = [&](std::size_t t, std::size_t g) { return first(t, g); };
  auto group_size = [&](std::size_t t, std::size_t g) {
    const auto& nt = config.node_types[t];
    return g < C ? nt.community_size : nt.count - C * nt.community_size;
  };

  const std::size_t R = config.edge_types.size();
  std::vector<std::size_t> esrc(R), edst(R);
  for (std::size_t r = 0; r < R; ++r) {
    esrc[r] = type_index(config, config.edge_types[r].src);
    edst[r] = type_index(config, config.edge_types[r].dst);
  }

  using EdgeList = std::vector<std::pair<NodeId, NodeId>>;
  std::vector<std::vector<EdgeList>> intra(C, std::vector<EdgeList>(R));
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t size = 0;
    std::vector<std::size_t> offset(T);
    for (std::size_t t = 0; t < T; ++t) {
      offset[t] = size;
      size += config.node_types[t].community_size;
    }
    bool connected = false;
    for (std::size_t attempt = 0; attempt <= config.max_retries && !connected; ++attempt) {
      Dsu dsu(size);
      for (std::size_t r = 0; r < R; ++r) {
        EdgeList& list = intra[c][r];
        list.clear();
        const std::size_t a = esrc[r], b = edst[r];
        bernoulli_block(rng, config.p_in, group_size(a, c), group_size(b, c), [&](std::size_t i, std::size_t j) {
          if (a == b && i == j) return;
          list.emplace_back(group_start(a, c) + static_cast<NodeId>(i), group_start(b, c) + static_cast<NodeId>(j));
          dsu.unite(offset[a] + i, offset[b] + j);
        });
      }
      connected = true;
      for (std::size_t i = 1; i < size && connected; ++i) connected = dsu.find(i) == dsu.find(0);
    }
    if (!connected) {
      throw std::runtime_error("synth: community " + std::to_string(c) + " stayed disconnected after " +
                               std::to_string(config.max_retries) + " retries; raise p_in");
    }
  }

  std::vector<EdgeTable> edges(R);
  for (std::size_t r = 0; r < R; ++r) {
    EdgeTable& table = edges[r];
    table.type = config.edge_types[r].name;
    for (std::size_t c = 0; c < C; ++c) {
      for (const auto& [s, d] : intra[c][r]) {
        table.src.push_back(s);
        table.dst.push_back(d);
      }
    }
    const std::size_t a = esrc[r], b = edst[r];
    for (std::size_t ga = 0; ga <= C; ++ga) {
      for (std::size_t gb = 0; gb <= C; ++gb) {
        if (ga == gb && ga < C) continue;
        bernoulli_block(rng, config.p_out, group_size(a, ga), group_size(b, gb), [&](std::size_t i, std::size_t j) {
          if (a == b && ga == gb && i == j) return;
          table.src.push_back(group_start(a, ga) + static_cast<NodeId>(i));
          table.dst.push_back(group_start(b, gb) + static_cast<NodeId>(j));
        });
      }
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<NodeTable> nodes(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& nt = config.node_types[t];
    std::vector<std::vector<double>> means(C, std::vector<double>(nt.feature_dim));
    for (auto& m : means) {
      double sq = 0.0;
      for (double& v : m) {
        v = normal(rng);
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      for (double& v : m) v = norm > 0.0 ? v * config.signal / norm : 0.0;
    }
    NodeTable& table = nodes[t];
    table.type = nt.name;
    table.features = ad::Matrix(nt.count, nt.feature_dim);
    for (std::size_t i = 0; i < nt.count; ++i) {
      table.ids.push_back(base[t] + static_cast<NodeId>(i));
      const std::size_t c = nt.community_size > 0 ? i / nt.community_size : C;
      for (std::size_t k = 0; k < nt.feature_dim; ++k) {
        table.features(i, k) = (c < C ? means[c][k] : 0.0) + normal(rng);
      }
    }
  }

  GraphSchema schema;
  for (const auto& nt : config.node_types) schema.node_types.push_back({nt.name, nt.feature_dim});
  for (const auto& e : config.edge_types) schema.edge_types.push_back({e.name, e.src, e.dst, 0});

  Dataset ds;
  ds.schema = schema;
  ds.graph = HeteroGraph::build(schema, nodes, edges);

  std::vector<NodeTypeId> targets;
  for (const auto& name : config.target_types) targets.push_back(static_cast<NodeTypeId>(type_index(config, name)));
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  for (std::size_t c = 0; c < C; ++c) {
    Community com;
    com.id = static_cast<std::int32_t>(c);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < config.node_types[t].community_size; ++i) {
        com.members.push_back(first(t, c) + static_cast<NodeId>(i));
      }
    }
    ds.communities.push_back(std::move(com));
  }

  std::vector<std::vector<NodeId>> targeted_members(C);
  std::vector<NodeId> all_targeted;
  for (NodeTypeId t : targets) {
    const auto tt = static_cast<std::size_t>(t);
    for (std::size_t i = 0; i < config.node_types[tt].count; ++i) {
      const NodeId v = base[tt] + static_cast<NodeId>(i);
      all_targeted.push_back(v);
      const std::size_t size = config.node_types[tt].community_size;
      if (size > 0 && i / size < C) targeted_members[i / size].push_back(v);
    }
  }
  std::sort(all_targeted.begin(), all_targeted.end());

  for (std::size_t k = 0; k < config.queries_per_community; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto& members = targeted_members[c];
      if (members.empty()) continue;
      QueryTask task;
      task.target_types = targets;
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      task.query = members[pick(rng)];
      const auto want = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(config.pos_fraction * static_cast<double>(members.size()))));
      std::vector<NodeId> others;
      for (NodeId v : members) {
        if (v != task.query) others.push_back(v);
      }
      task.pos.push_back(task.query);
      std::sample(others.begin(), others.end(), std::back_inserter(task.pos), want - 1, rng);
      std::vector<NodeId> outside;
      std::set_difference(all_targeted.begin(), all_targeted.end(), members.begin(), members.end(),
                          std::back_inserter(outside));
      std::sample(outside.begin(), outside.end(), std::back_inserter(task.neg), task.pos.size(), rng);
      ds.tasks.push_back(std::move(task));
    }
  }
  return ds;
}

}  // namespace hetcs
