#pragma once

// Dense rank-2 tensors with tape-based reverse-mode differentiation.
//
// A Tape owns every intermediate produced while evaluating an expression.
// Nodes are appended in evaluation order, which is a valid topological
// order, so backward() is a single reverse sweep over the tape.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetcs::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major matrix of doubles. Vectors are 1×n or n×1 matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
  std::string shape_str() const;
};

using Index = std::vector<std::int32_t>;
/// Shared, immutable index arrays; large edge lists are reused by many ops.
using IndexPtr = std::shared_ptr<const Index>;

inline IndexPtr make_index(Index idx) {
  return std::make_shared<const Index>(std::move(idx));
}

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Matrix& value() const;
  /// Gradient after backward(); zero matrix if nothing flowed into it.
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the tape and the id of the node whose gradient is being pushed back.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input.
  Var constant(Matrix value);
  /// Tracked leaf owning its value.
  Var leaf(Matrix value);
  /// Tracked leaf that reads `value` in place. `value` must outlive the tape.
  Var parameter(const Matrix& value);
  /// Untracked input read in place. `value` must outlive the tape.
  Var constant_view(const Matrix& value);

  /// Records an op result. `backward` is dropped when `tracked` is false.
  Var record(Matrix value, bool tracked, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const;
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Mutable gradient buffer for `id`, zero-initialised on first use.
  Matrix& grad_acc(std::size_t id);
  /// Resets every gradient buffer so backward() can be rerun.
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  // deque keeps node addresses stable while ops append.
  std::deque<Node> nodes_;
};

// ---- forward ops -----------------------------------------------------------

/// A(n×k) · B(k×m).
Var matmul(Var a, Var b);
/// X(n×k) · W(m×k)ᵀ, i.e. W applied to every row of X as a column vector.
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
/// A(n×m) + b(1×m) broadcast over rows.
Var add_row(Var a, Var b);
/// Row i of A(n×m) multiplied by s(n×1)[i].
Var scale_rows(Var a, Var s);
/// Horizontal concatenation; all inputs share the row count.
Var concat_cols(const std::vector<Var>& parts);
/// Vertical concatenation; all inputs share the column count.
Var concat_rows(const std::vector<Var>& parts);

Var leaky_relu(Var a, double slope = 0.2);
Var elu(Var a);
Var sigmoid(Var a);
Var log(Var a);

/// Sum of all entries, as a 1×1 matrix.
Var sum(Var a);
Var mean(Var a);

/// out[i] = A[idx[i]].
Var gather_rows(Var a, IndexPtr idx);
/// out[s] = Σ_{i: seg[i]=s} A[i]; `num_segments` rows.
Var segment_sum(Var a, IndexPtr segment_ids, std::size_t num_segments);
/// Column-wise softmax inside each segment, max-shifted.
Var segment_softmax(Var scores, IndexPtr segment_ids, std::size_t num_segments);

/// Z(n×d) with columns split into `groups` equal blocks, a(1×d):
/// out(n×groups)[i,k] = Σ_{c in block k} Z[i,c]·a[c].
Var grouped_row_dot(Var z, Var a, std::size_t groups);

/// Fused attention normalisation over messages e with destination dst[e]:
///   α[e,k] = softmax_{e' : dst[e'] = dst[e]} LeakyReLU(x[e',k]),
///   x[e,k] = s_dst[dst[e],k] + s_src[src[e],k] + s_edge[row[e],k].
/// The softmax is max-shifted per destination and head.
Var edge_softmax(Var s_dst, Var s_src, Var s_edge, IndexPtr dst, IndexPtr src, IndexPtr row,
                 std::size_t num_nodes, double slope);

/// Multi-head weighted neighbour sum without materialising per-edge rows.
/// alpha(E×K), z(n×d) with d = K·w:
///   out[dst[e], k·w + c] += alpha[e,k] · z[src[e], k·w + c].
Var edge_aggregate(Var alpha, Var z, IndexPtr src, IndexPtr dst, std::size_t num_out);

/// Inverted dropout: zero each entry with probability `rate`, scale the rest.
Var dropout(Var a, double rate, std::mt19937_64& rng);

/// Mean binary cross entropy over the rows `ids` of p(n×1) with 0/1 labels.
/// p is clamped to [clamp, 1−clamp] before the log; clamped entries pass no
/// gradient.
Var binary_cross_entropy(Var p, IndexPtr ids, const std::vector<double>& labels,
                         double clamp = 1e-12);

// ---- scalar helpers used by tests ------------------------------------------

double elu_value(double x);
double leaky_relu_value(double x, double slope);
double sigmoid_value(double x);

}  // namespace hetcs::ad
