#include "hetcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hetcs {

namespace {

std::vector<NodeId> as_set(std::span<const NodeId> s) {
  std::vector<NodeId> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::size_t intersection_size(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  std::size_t i = 0, j = 0, c = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++c, ++i, ++j;
    }
  }
  return c;
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

double f1_score(std::span<const NodeId> pred, std::span<const NodeId> truth) {
  const auto a = as_set(pred), b = as_set(truth);
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const auto tp = static_cast<double>(intersection_size(a, b));
  return 2.0 * tp / static_cast<double>(a.size() + b.size());
}

double jaccard(std::span<const NodeId> pred, std::span<const NodeId> truth) {
  const auto a = as_set(pred), b = as_set(truth);
  if (a.empty() && b.empty()) return 1.0;
  const auto inter = intersection_size(a, b);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double nmi(std::span<const NodeId> pred, std::span<const NodeId> truth, std::span<const NodeId> universe) {
  const auto u = as_set(universe);
  if (u.empty()) throw std::invalid_argument("nmi: empty universe");
  const auto a = as_set(pred), b = as_set(truth);
  for (const auto* s : {&a, &b}) {
    for (NodeId v : *s) {
      if (!std::binary_search(u.begin(), u.end(), v)) {
        throw std::invalid_argument("nmi: node " + std::to_string(v) + " lies outside the universe");
      }
    }
  }
  const double n = static_cast<double>(u.size());
  const double n11 = static_cast<double>(intersection_size(a, b));
  const double n10 = static_cast<double>(a.size()) - n11;
  const double n01 = static_cast<double>(b.size()) - n11;
  const double n00 = n - n11 - n10 - n01;
  const double pa1 = static_cast<double>(a.size()) / n, pb1 = static_cast<double>(b.size()) / n;
  const double ha = -(plogp(pa1) + plogp(1.0 - pa1));
  const double hb = -(plogp(pb1) + plogp(1.0 - pb1));
  if (ha == 0.0 || hb == 0.0) {
    return (ha == 0.0 && hb == 0.0 && a.size() == b.size()) ? 1.0 : 0.0;
  }
  double mi = 0.0;
  const double cells[4][3] = {{n11, pa1, pb1}, {n10, pa1, 1.0 - pb1}, {n01, 1.0 - pa1, pb1}, {n00, 1.0 - pa1, 1.0 - pb1}};
  for (const auto& c : cells) {
    if (c[0] > 0.0) {
      const double pj = c[0] / n;
      mi += pj * std::log(pj / (c[1] * c[2]));
    }
  }
  return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

}  // namespace hetcs
