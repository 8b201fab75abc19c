#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hetcs/adam.hpp"
#include "hetcs/autodiff.hpp"
#include "hetcs/gradcheck.hpp"

using namespace hetcs::ad;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data) x = n(rng);
  return m;
}

double check(const LossBuilder& f, std::vector<Matrix>& params) {
  std::vector<Matrix*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return finite_diff_check(f, ptrs).max_relative_error;
}

}  // namespace

TEST_CASE("scalar activations") {
  CHECK(elu_value(0.0) == 0.0);
  CHECK(elu_value(1.0) == 1.0);
  CHECK(elu_value(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
  CHECK(elu_value(-1.0) == doctest::Approx(-0.6321).epsilon(1e-4));
  CHECK(leaky_relu_value(-2.0, 0.2) == doctest::Approx(-0.4));
  CHECK(sigmoid_value(0.0) == 0.5);
}

TEST_CASE("matmul forward") {
  Tape t;
  Var a = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  Var b = t.constant(Matrix::from_rows({{1}, {1}}));
  Var c = matmul(a, b);
  CHECK(c.value().data == std::vector<double>{3, 7});
  CHECK_THROWS_AS(matmul(b, b), ShapeError);
}

TEST_CASE("shape errors name the op") {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(3, 2));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
  }
}

TEST_CASE("segment_softmax examples") {
  Tape t;
  auto seg = make_index({0, 1, 1, 2, 2});
  Var s = t.constant(Matrix(5, 1, std::vector<double>{4.0, 1.0, 1.0, std::log(3.0), 0.0}));
  Var w = segment_softmax(s, seg, 3);
  CHECK(w.value().data[0] == doctest::Approx(1.0));
  CHECK(w.value().data[1] == doctest::Approx(0.5));
  CHECK(w.value().data[2] == doctest::Approx(0.5));
  CHECK(w.value().data[3] == doctest::Approx(0.75));
  CHECK(w.value().data[4] == doctest::Approx(0.25));
  Var empty = segment_softmax(t.constant(Matrix(0, 2)), make_index({}), 0);
  CHECK(empty.value().size() == 0);
}

TEST_CASE("segment_softmax sums to one on random segments") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> seg_of(0, 6);
    Index ids;
    for (int i = 0; i < 40; ++i) ids.push_back(seg_of(rng));
    Tape t;
    Matrix s = random_matrix(rng, 40, 3);
    for (double& x : s.data) x *= 30.0;
    Var w = segment_softmax(t.constant(s), make_index(ids), 7);
    std::vector<double> sums(7 * 3, 0.0);
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t c = 0; c < 3; ++c) sums[static_cast<std::size_t>(ids[i]) * 3 + c] += w.value()(i, c);
    for (std::size_t sgm = 0; sgm < 7; ++sgm) {
      if (std::find(ids.begin(), ids.end(), static_cast<int>(sgm)) == ids.end()) continue;
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(sums[sgm * 3 + c] - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("backward analytic examples") {
  Tape t;
  Var x = t.leaf(Matrix(1, 1, 3.0));
  Var loss = sum(mul(x, x));
  t.backward(loss);
  CHECK(x.grad().data[0] == doctest::Approx(6.0));

  Tape t2;
  Var w = t2.leaf(Matrix(1, 1, 0.0));
  Var in = t2.constant(Matrix(1, 1, 1.0));
  Var out = sum(sigmoid(matmul(w, in)));
  t2.backward(out);
  CHECK(w.grad().data[0] == doctest::Approx(0.25));
}

TEST_CASE("backward rejects bad losses") {
  Tape t;
  Var x = t.leaf(Matrix(2, 1, 1.0));
  CHECK_THROWS(t.backward(x));
  Var c = t.constant(Matrix(1, 1, 1.0));
  CHECK_THROWS(t.backward(c));
}

TEST_CASE("fan-in accumulates gradients") {
  Tape t;
  Var x = t.leaf(Matrix(1, 1, 2.0));
  Var y = add(scale(x, 3.0), mul(x, x));
  t.backward(sum(y));
  CHECK(x.grad().data[0] == doctest::Approx(3.0 + 4.0));
}

TEST_CASE("finite differences: elementwise and reduction ops") {
  std::mt19937_64 rng(11);
  std::vector<Matrix> p{random_matrix(rng, 3, 4), random_matrix(rng, 3, 4), random_matrix(rng, 1, 4),
                        random_matrix(rng, 3, 1)};
  auto f = [](Tape&, const std::vector<Var>& v) {
    Var a = leaky_relu(add(v[0], v[1]), 0.2);
    Var b = elu(sub(mul(v[0], v[1]), add_row(v[0], v[2])));
    Var c = sigmoid(scale_rows(add_scalar(b, 0.3), v[3]));
    Var d = log(add_scalar(sigmoid(a), 0.5));
    return add(mean(concat_cols({c, d})), scale(sum(concat_rows({a, b})), 0.1));
  };
  CHECK(check(f, p) < 1e-6);
}

TEST_CASE("finite differences: matmul and linear") {
  std::mt19937_64 rng(12);
  std::vector<Matrix> p{random_matrix(rng, 4, 3), random_matrix(rng, 3, 2), random_matrix(rng, 5, 3)};
  auto f = [](Tape&, const std::vector<Var>& v) {
    return add(sum(elu(matmul(v[0], v[1]))), sum(elu(linear(v[0], v[2]))));
  };
  CHECK(check(f, p) < 1e-6);
}

TEST_CASE("finite differences: gather, segment and attention kernels") {
  std::mt19937_64 rng(13);
  auto seg = make_index({0, 0, 1, 2, 2, 2, 1});
  auto src = make_index({1, 2, 0, 0, 1, 3, 3});
  auto row = make_index({0, 1, 1, 0, 2, 2, 0});
  std::vector<Matrix> p{random_matrix(rng, 4, 6), random_matrix(rng, 1, 6), random_matrix(rng, 3, 6),
                        random_matrix(rng, 7, 2)};
  auto f = [&](Tape&, const std::vector<Var>& v) {
    Var sd = grouped_row_dot(v[0], v[1], 2);                           // 4x2
    Var ss = grouped_row_dot(v[0], scale(v[1], -0.5), 2);              // 4x2
    Var se = grouped_row_dot(v[2], v[1], 2);                           // 3x2
    Var alpha = edge_softmax(sd, ss, se, seg, src, row, 4, 0.2);       // 7x2
    Var agg = edge_aggregate(alpha, v[0], src, seg, 4);                // 4x6
    Var gs = segment_sum(gather_rows(v[3], make_index({6, 5, 4, 3, 2, 1, 0})), seg, 4);
    Var sm = segment_softmax(v[3], seg, 4);
    return add(sum(elu(agg)), add(sum(mul(gs, gs)), sum(mul(sm, v[3]))));
  };
  CHECK(check(f, p) < 1e-6);
}

TEST_CASE("edge_softmax matches the composed kernels") {
  std::mt19937_64 rng(14);
  auto dst = make_index({0, 0, 1, 2, 2, 2});
  auto src = make_index({1, 2, 0, 0, 1, 2});
  auto row = make_index({0, 1, 1, 0, 1, 0});
  Tape t;
  Var d = t.constant(random_matrix(rng, 3, 2));
  Var s = t.constant(random_matrix(rng, 3, 2));
  Var e = t.constant(random_matrix(rng, 2, 2));
  Var fused = edge_softmax(d, s, e, dst, src, row, 3, 0.2);
  Var composed = segment_softmax(
      leaky_relu(add(add(gather_rows(d, dst), gather_rows(s, src)), gather_rows(e, row)), 0.2), dst, 3);
  for (std::size_t i = 0; i < fused.value().size(); ++i) {
    CHECK(fused.value().data[i] == doctest::Approx(composed.value().data[i]).epsilon(1e-14));
  }
}

TEST_CASE("binary cross entropy") {
  Tape t;
  Var p = t.leaf(Matrix(3, 1, std::vector<double>{0.5, 0.9, 1.0}));
  Var l1 = binary_cross_entropy(p, make_index({0}), {1.0});
  CHECK(l1.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Var l2 = binary_cross_entropy(p, make_index({1}), {1.0});
  CHECK(l2.scalar() == doctest::Approx(0.105361).epsilon(1e-5));
  Var l3 = binary_cross_entropy(p, make_index({2}), {1.0});
  CHECK(l3.scalar() == doctest::Approx(1e-12).epsilon(1e-3));
  CHECK_THROWS(binary_cross_entropy(p, make_index({0}), {0.5}));
  CHECK_THROWS(binary_cross_entropy(p, make_index({}), {}));
  std::mt19937_64 rng(15);
  std::vector<Matrix> q{Matrix(4, 1, std::vector<double>{0.2, 0.7, 0.4, 0.9})};
  auto f = [](Tape&, const std::vector<Var>& v) {
    return binary_cross_entropy(v[0], make_index({0, 1, 3}), {0.0, 1.0, 1.0});
  };
  CHECK(check(f, q) < 1e-6);
}

TEST_CASE("dropout is inverted and seeded") {
  Tape t;
  std::mt19937_64 a(1), b(1);
  Var x = t.constant(Matrix(100, 10, 1.0));
  Var y1 = dropout(x, 0.5, a);
  Var y2 = dropout(x, 0.5, b);
  CHECK(y1.value().data == y2.value().data);
  for (double v : y1.value().data) CHECK((v == 0.0 || v == doctest::Approx(2.0)));
}

TEST_CASE("gradient check utility sanity") {
  std::vector<Matrix> p{Matrix(2, 2, std::vector<double>{1, 2, 3, 4})};
  std::vector<Matrix*> ptr{&p[0]};
  auto linear_fn = [](Tape& t, const std::vector<Var>& v) {
    return sum(mul(v[0], t.constant(Matrix(2, 2, std::vector<double>{1, -2, 3, 0.5}))));
  };
  CHECK(finite_diff_check(linear_fn, ptr).max_relative_error < 1e-9);
  auto constant_fn = [](Tape& t, const std::vector<Var>& v) { return add(scale(sum(v[0]), 0.0), t.constant(Matrix(1, 1, 5.0))); };
  const auto r = finite_diff_check(constant_fn, ptr);
  CHECK(r.max_relative_error == 0.0);
  CHECK(p[0].data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("backward is bit-deterministic") {
  std::mt19937_64 rng(16);
  Matrix a = random_matrix(rng, 5, 4), b = random_matrix(rng, 4, 3);
  auto run = [&] {
    Tape t;
    Var x = t.parameter(a), y = t.parameter(b);
    t.backward(sum(elu(matmul(x, y))));
    return std::make_pair(x.grad().data, y.grad().data);
  };
  CHECK(run() == run());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient without decay leaves parameters") {
    Matrix p(2, 2, 1.5), g(2, 2, 0.0);
    Adam opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    opt.step({{"p", &p, &g}});
    CHECK(p.data == std::vector<double>(4, 1.5));
  }
  SUBCASE("first step moves by about lr") {
    Matrix p(1, 1, 0.0), g(1, 1, 1.0);
    Adam opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    opt.step({{"p", &p, &g}});
    CHECK(p.data[0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("identical parameters get identical updates") {
    Matrix p1(1, 3, 0.3), p2(1, 3, 0.3), g(1, 3, -0.7);
    Adam opt;
    for (int i = 0; i < 3; ++i) opt.step({{"a", &p1, &g}, {"b", &p2, &g}});
    CHECK(p1.data == p2.data);
  }
  SUBCASE("decoupled weight decay") {
    Matrix p(1, 1, 2.0), g(1, 1, 0.0);
    Adam opt({0.1, 0.9, 0.999, 1e-8, 0.5});
    opt.step({{"p", &p, &g}});
    CHECK(p.data[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }
  SUBCASE("non-finite gradient is rejected by name") {
    Matrix p(1, 2, 1.0), q(1, 1, 1.0), g(1, 2, 0.0), h(1, 1, std::nan(""));
    Adam opt;
    try {
      opt.step({{"good", &p, &g}, {"bad", &q, &h}});
      FAIL("expected domain_error");
    } catch (const std::domain_error& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(p.data == std::vector<double>(2, 1.0));
  }
}
