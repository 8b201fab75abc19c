#include <doctest.h>

#include <cmath>
#include <random>

#include "hetcs/metrics.hpp"
#include "oracles.hpp"

using namespace hetcs;
using Set = std::vector<NodeId>;

namespace {

Set random_subset(std::mt19937_64& rng, const Set& universe, double p) {
  std::bernoulli_distribution keep(p);
  Set out;
  for (NodeId v : universe)
    if (keep(rng)) out.push_back(v);
  return out;
}

}  // namespace

TEST_CASE("f1 examples") {
  CHECK(f1_score(Set{1, 2}, Set{1, 2}) == 1.0);
  CHECK(f1_score(Set{1, 2}, Set{3}) == 0.0);
  CHECK(f1_score(Set{2, 3}, Set{2, 3, 4}) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(f1_score(Set{}, Set{}) == 1.0);
  CHECK(f1_score(Set{}, Set{1}) == 0.0);
  CHECK(f1_score(Set{2, 2, 3}, Set{2, 3, 4}) == doctest::Approx(0.8));
}

TEST_CASE("jaccard examples") {
  CHECK(jaccard(Set{4, 5}, Set{5, 4}) == 1.0);
  CHECK(jaccard(Set{1, 2}, Set{2, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(jaccard(Set{1}, Set{2}) == 0.0);
  CHECK(jaccard(Set{}, Set{}) == 1.0);
}

TEST_CASE("nmi examples") {
  const Set u{0, 1, 2, 3};
  CHECK(nmi(Set{0, 1}, Set{0, 1}, u) == doctest::Approx(1.0).epsilon(1e-14));
  const double v = nmi(Set{0}, Set{0, 1}, u);
  CHECK(v == doctest::Approx(oracles::nmi_table(Set{0}, Set{0, 1}, u)).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.344).epsilon(1e-3));
  CHECK(nmi(Set{}, Set{}, u) == 1.0);
  CHECK(nmi(u, u, u) == 1.0);
  CHECK(nmi(Set{}, Set{0}, u) == 0.0);
  CHECK_THROWS_AS(nmi(Set{}, Set{}, Set{}), std::invalid_argument);
  CHECK_THROWS_AS(nmi(Set{9}, Set{}, u), std::invalid_argument);
}

TEST_CASE("independent sets have vanishing nmi") {
  std::mt19937_64 rng(41);
  Set universe(20000);
  for (std::size_t i = 0; i < universe.size(); ++i) universe[i] = static_cast<NodeId>(i);
  const Set a = random_subset(rng, universe, 0.3);
  const Set b = random_subset(rng, universe, 0.5);
  CHECK(nmi(a, b, universe) < 0.05);
}

TEST_CASE("metric properties on random sets") {
  std::mt19937_64 rng(42);
  Set universe(30);
  for (std::size_t i = 0; i < universe.size(); ++i) universe[i] = static_cast<NodeId>(i);
  for (int trial = 0; trial < 300; ++trial) {
    const Set a = random_subset(rng, universe, 0.4);
    const Set b = random_subset(rng, universe, 0.4);
    const double f = f1_score(a, b), j = jaccard(a, b), m = nmi(a, b, universe);
    CHECK(f == doctest::Approx(f1_score(b, a)).epsilon(1e-15));
    CHECK(j == doctest::Approx(jaccard(b, a)).epsilon(1e-15));
    CHECK(m == doctest::Approx(nmi(b, a, universe)).epsilon(1e-12));
    CHECK(f >= j - 1e-15);
    CHECK(f == doctest::Approx(2 * j / (1 + j)).epsilon(1e-12));
    for (double x : {f, j, m}) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    Set ca, cb;
    for (NodeId v : universe) {
      if (std::find(a.begin(), a.end(), v) == a.end()) ca.push_back(v);
      if (std::find(b.begin(), b.end(), v) == b.end()) cb.push_back(v);
    }
    CHECK(nmi(ca, cb, universe) == doctest::Approx(m).epsilon(1e-12));
    const bool trivial = a.empty() || b.empty() || a.size() == universe.size() || b.size() == universe.size();
    if (!trivial) CHECK(m == doctest::Approx(oracles::nmi_table(a, b, universe)).epsilon(1e-12));
  }
}
