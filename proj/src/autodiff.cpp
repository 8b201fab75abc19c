#include "hetcs/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hetcs::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols));
}
MutMap view(Matrix& m) {
  return MutMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                static_cast<Eigen::Index>(m.cols));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different tapes");
  }
}


// Elementwise op whose derivative is stored alongside the forward value.
template <typename F>
Var unary_elementwise(Var a, F forward_and_deriv) {
  Tape& tape = a.tape();
  const Matrix& x = a.value();
  Matrix out(x.rows, x.cols);
  const bool tracked = a.requires_grad();
  auto deriv = std::make_shared<std::vector<double>>(tracked ? x.size() : 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = 0.0;
    out.data[i] = forward_and_deriv(x.data[i], d);
    if (tracked) (*deriv)[i] = d;
  }
  const std::size_t in = a.id();
  return tape.record(std::move(out), tracked, [in, deriv](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& gi = t.grad_acc(in);
    for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i] * (*deriv)[i];
  });
}

void check_index(const Index& idx, std::size_t bound, const char* op) {
  for (auto i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= bound) {
      throw std::out_of_range(std::string(op) + ": index " + std::to_string(i) +
                              " out of range [0, " + std::to_string(bound) + ")");
    }
  }
}

}  // namespace

// ---- Matrix ----------------------------------------------------------------

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ShapeError("Matrix: buffer length " + std::to_string(data.size()) +
                     " does not match shape " + std::to_string(r) + "x" + std::to_string(c));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  m.rows = rows.size();
  m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
  for (const auto& r : rows) {
    if (r.size() != m.cols) throw ShapeError("Matrix::from_rows: ragged rows");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << "(" << rows << "x" << cols << ")";
  return os.str();
}

// ---- Var / Tape ------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on non-scalar " + v.shape_str());
  return v.data[0];
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Matrix& value) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_view(const Matrix& value) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool tracked, BackwardFn backward) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = tracked;
  if (tracked) n.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.size() == 0 && value(id).size() != 0) {
    // Nothing accumulated: expose zeros of the right shape.
    auto& self = const_cast<Node&>(n);
    const Matrix& v = value(id);
    self.grad = Matrix(v.rows, v.cols);
  }
  return n.grad;
}

Matrix& Tape::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix(v.rows, v.cols);
  }
  return n.grad;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Matrix{};
}

void Tape::backward(Var loss) {
  if (!loss.valid() || &loss.tape() != this) {
    throw std::invalid_argument("backward: loss does not belong to this tape");
  }
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + loss.value().shape_str());
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss is not connected to any tracked input");
  }
  grad_acc(loss.id()).data[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}


// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols != B.rows) shape_fail("matmul", A, B);
  Matrix out(A.rows, B.cols);
  view(out).noalias() = view(A) * view(B);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia))
                             view(t.grad_acc(ia)).noalias() += view(g) * view(t.value(ib)).transpose();
                           if (t.requires_grad(ib))
                             view(t.grad_acc(ib)).noalias() += view(t.value(ia)).transpose() * view(g);
                         });
}

Var linear(Var x, Var w) {
  require_same_tape(x, w, "linear");
  const Matrix& X = x.value();
  const Matrix& W = w.value();
  if (X.cols != W.cols) shape_fail("linear", X, W);
  Matrix out(X.rows, W.rows);
  view(out).noalias() = view(X) * view(W).transpose();
  const std::size_t ix = x.id(), iw = w.id();
  return x.tape().record(std::move(out), x.requires_grad() || w.requires_grad(),
                         [ix, iw](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ix))
                             view(t.grad_acc(ix)).noalias() += view(g) * view(t.value(iw));
                           if (t.requires_grad(iw))
                             view(t.grad_acc(iw)).noalias() += view(g).transpose() * view(t.value(ix));
                         });
}

namespace {

Var add_like(Var a, Var b, double sign, const char* op) {
  require_same_tape(a, b, op);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!A.same_shape(B)) shape_fail(op, A, B);
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += sign * B.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib, sign](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) {
                             Matrix& ga = t.grad_acc(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                           }
                           if (t.requires_grad(ib)) {
                             Matrix& gb = t.grad_acc(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += sign * g.data[i];
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) { return add_like(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_like(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!A.same_shape(B)) shape_fail("mul", A, B);
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) {
                             Matrix& ga = t.grad_acc(ia);
                             const Matrix& B = t.value(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
                           }
                           if (t.requires_grad(ib)) {
                             Matrix& gb = t.grad_acc(ib);
                             const Matrix& A = t.value(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
                           }
                         });
}

Var scale(Var a, double factor) {
  return unary_elementwise(a, [factor](double x, double& d) {
    d = factor;
    return x * factor;
  });
}

Var add_scalar(Var a, double c) {
  return unary_elementwise(a, [c](double x, double& d) {
    d = 1.0;
    return x + c;
  });
}

Var add_row(Var a, Var b) {
  require_same_tape(a, b, "add_row");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (B.rows != 1 || B.cols != A.cols) shape_fail("add_row", A, B);
  Matrix out = A;
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < A.cols; ++c) out(r, c) += B.data[c];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) {
                             Matrix& ga = t.grad_acc(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                           }
                           if (t.requires_grad(ib)) {
                             Matrix& gb = t.grad_acc(ib);
                             for (std::size_t r = 0; r < g.rows; ++r)
                               for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
                           }
                         });
}

Var scale_rows(Var a, Var s) {
  require_same_tape(a, s, "scale_rows");
  const Matrix& A = a.value();
  const Matrix& S = s.value();
  if (S.cols != 1 || S.rows != A.rows) shape_fail("scale_rows", A, S);
  Matrix out = A;
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < A.cols; ++c) out(r, c) *= S.data[r];
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record(std::move(out), a.requires_grad() || s.requires_grad(),
                         [ia, is](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const Matrix& A = t.value(ia);
                           const Matrix& S = t.value(is);
                           if (t.requires_grad(ia)) {
                             Matrix& ga = t.grad_acc(ia);
                             for (std::size_t r = 0; r < g.rows; ++r)
                               for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += g(r, c) * S.data[r];
                           }
                           if (t.requires_grad(is)) {
                             Matrix& gs = t.grad_acc(is);
                             for (std::size_t r = 0; r < g.rows; ++r) {
                               double acc = 0.0;
                               for (std::size_t c = 0; c < g.cols; ++c) acc += g(r, c) * A(r, c);
                               gs.data[r] += acc;
                             }
                           }
                         });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool tracked = false;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    tracked = tracked || p.requires_grad();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& P = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(P.row(r).begin(), P.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += P.cols;
  }
  return parts.front().tape().record(std::move(out), tracked, [ids](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols;
      if (t.requires_grad(id)) {
        Matrix& gp = t.grad_acc(id);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, offset + c);
      }
      offset += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool tracked = false;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_rows");
    if (p.cols() != cols) shape_fail("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    tracked = tracked || p.requires_grad();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  auto it = out.data.begin();
  for (const Var& p : parts) it = std::copy(p.value().data.begin(), p.value().data.end(), it);
  return parts.front().tape().record(std::move(out), tracked, [ids](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        Matrix& gp = t.grad_acc(id);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += g.data[offset + i];
      }
      offset += n;
    }
  });
}

double elu_value(double x) { return x > 0.0 ? x : std::expm1(x); }
double leaky_relu_value(double x, double slope) { return x > 0.0 ? x : slope * x; }
double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var leaky_relu(Var a, double slope) {
  return unary_elementwise(a, [slope](double x, double& d) {
    d = x > 0.0 ? 1.0 : slope;
    return leaky_relu_value(x, slope);
  });
}

Var elu(Var a) {
  return unary_elementwise(a, [](double x, double& d) {
    const double y = elu_value(x);
    d = x > 0.0 ? 1.0 : y + 1.0;
    return y;
  });
}

Var sigmoid(Var a) {
  return unary_elementwise(a, [](double x, double& d) {
    const double y = sigmoid_value(x);
    d = y * (1.0 - y);
    return y;
  });
}

Var log(Var a) {
  return unary_elementwise(a, [](double x, double& d) {
    d = 1.0 / x;
    return std::log(x);
  });
}

Var sum(Var a) {
  const Matrix& A = a.value();
  double total = 0.0;
  for (double v : A.data) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(Matrix(1, 1, total), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    Matrix& ga = t.grad_acc(ia);
    for (double& v : ga.data) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var gather_rows(Var a, IndexPtr idx) {
  const Matrix& A = a.value();
  check_index(*idx, A.rows, "gather_rows");
  Matrix out(idx->size(), A.cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    auto src = A.row(static_cast<std::size_t>((*idx)[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, idx](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_acc(ia);
    const std::size_t w = g.cols;
    for (std::size_t i = 0; i < idx->size(); ++i) {
      double* dst = ga.data.data() + static_cast<std::size_t>((*idx)[i]) * w;
      const double* src = g.data.data() + i * w;
      for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
    }
  });
}

Var segment_sum(Var a, IndexPtr segment_ids, std::size_t num_segments) {
  const Matrix& A = a.value();
  if (segment_ids->size() != A.rows) {
    throw ShapeError("segment_sum: " + std::to_string(segment_ids->size()) +
                     " segment ids for " + A.shape_str());
  }
  check_index(*segment_ids, num_segments, "segment_sum");
  Matrix out(num_segments, A.cols);
  const std::size_t w = A.cols;
  for (std::size_t i = 0; i < A.rows; ++i) {
    double* dst = out.data.data() + static_cast<std::size_t>((*segment_ids)[i]) * w;
    const double* src = A.data.data() + i * w;
    for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, segment_ids](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           Matrix& ga = t.grad_acc(ia);
                           const std::size_t w = g.cols;
                           for (std::size_t i = 0; i < segment_ids->size(); ++i) {
                             const double* src =
                                 g.data.data() + static_cast<std::size_t>((*segment_ids)[i]) * w;
                             double* dst = ga.data.data() + i * w;
                             for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
                           }
                         });
}

Var segment_softmax(Var scores, IndexPtr segment_ids, std::size_t num_segments) {
  const Matrix& S = scores.value();
  if (segment_ids->size() != S.rows) {
    throw ShapeError("segment_softmax: " + std::to_string(segment_ids->size()) +
                     " segment ids for " + S.shape_str());
  }
  check_index(*segment_ids, num_segments, "segment_softmax");
  const std::size_t k = S.cols;
  Matrix seg_max(num_segments, k, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < S.rows; ++i) {
    const auto s = static_cast<std::size_t>((*segment_ids)[i]);
    for (std::size_t c = 0; c < k; ++c) seg_max(s, c) = std::max(seg_max(s, c), S(i, c));
  }
  Matrix out(S.rows, k);
  Matrix seg_sum(num_segments, k);
  for (std::size_t i = 0; i < S.rows; ++i) {
    const auto s = static_cast<std::size_t>((*segment_ids)[i]);
    for (std::size_t c = 0; c < k; ++c) {
      out(i, c) = std::exp(S(i, c) - seg_max(s, c));
      seg_sum(s, c) += out(i, c);
    }
  }
  for (std::size_t i = 0; i < S.rows; ++i) {
    const auto s = static_cast<std::size_t>((*segment_ids)[i]);
    for (std::size_t c = 0; c < k; ++c) out(i, c) /= seg_sum(s, c);
  }
  const std::size_t is = scores.id();
  return scores.tape().record(
      std::move(out), scores.requires_grad(),
      [is, segment_ids, num_segments](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& w = t.value(self);
        const std::size_t k = g.cols;
        Matrix dot(num_segments, k);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const auto s = static_cast<std::size_t>((*segment_ids)[i]);
          for (std::size_t c = 0; c < k; ++c) dot(s, c) += w(i, c) * g(i, c);
        }
        Matrix& gs = t.grad_acc(is);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const auto s = static_cast<std::size_t>((*segment_ids)[i]);
          for (std::size_t c = 0; c < k; ++c) gs(i, c) += w(i, c) * (g(i, c) - dot(s, c));
        }
      });
}

Var grouped_row_dot(Var z, Var a, std::size_t groups) {
  require_same_tape(z, a, "grouped_row_dot");
  const Matrix& Z = z.value();
  const Matrix& A = a.value();
  if (A.rows != 1 || A.cols != Z.cols || groups == 0 || Z.cols % groups != 0) {
    shape_fail("grouped_row_dot", Z, A);
  }
  const std::size_t w = Z.cols / groups;
  Matrix out(Z.rows, groups);
  for (std::size_t i = 0; i < Z.rows; ++i) {
    const double* zr = Z.data.data() + i * Z.cols;
    for (std::size_t k = 0; k < groups; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < w; ++c) acc += zr[k * w + c] * A.data[k * w + c];
      out(i, k) = acc;
    }
  }
  const std::size_t iz = z.id(), ia = a.id();
  return z.tape().record(std::move(out), z.requires_grad() || a.requires_grad(),
                         [iz, ia, groups, w](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const Matrix& Z = t.value(iz);
                           const Matrix& A = t.value(ia);
                           if (t.requires_grad(iz)) {
                             Matrix& gz = t.grad_acc(iz);
                             for (std::size_t i = 0; i < Z.rows; ++i)
                               for (std::size_t k = 0; k < groups; ++k) {
                                 const double gi = g(i, k);
                                 for (std::size_t c = 0; c < w; ++c)
                                   gz(i, k * w + c) += gi * A.data[k * w + c];
                               }
                           }
                           if (t.requires_grad(ia)) {
                             Matrix& ga = t.grad_acc(ia);
                             for (std::size_t i = 0; i < Z.rows; ++i)
                               for (std::size_t k = 0; k < groups; ++k) {
                                 const double gi = g(i, k);
                                 for (std::size_t c = 0; c < w; ++c)
                                   ga.data[k * w + c] += gi * Z(i, k * w + c);
                               }
                           }
                         });
}

Var edge_softmax(Var s_dst, Var s_src, Var s_edge, IndexPtr dst, IndexPtr src, IndexPtr row,
                 std::size_t num_nodes, double slope) {
  require_same_tape(s_dst, s_src, "edge_softmax");
  require_same_tape(s_dst, s_edge, "edge_softmax");
  const Matrix& D = s_dst.value();
  const Matrix& S = s_src.value();
  const Matrix& R = s_edge.value();
  const std::size_t k = D.cols;
  const std::size_t m = dst->size();
  if (S.cols != k || R.cols != k || src->size() != m || row->size() != m || D.rows != num_nodes) {
    throw ShapeError("edge_softmax: inconsistent inputs " + D.shape_str() + ", " + S.shape_str() + ", " +
                     R.shape_str());
  }
  check_index(*dst, num_nodes, "edge_softmax(dst)");
  check_index(*src, S.rows, "edge_softmax(src)");
  check_index(*row, R.rows, "edge_softmax(row)");

  Matrix out(m, k);
  auto positive = std::make_shared<std::vector<char>>(m * k);
  Matrix seg_max(num_nodes, k, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < m; ++e) {
    const double* a = D.data.data() + static_cast<std::size_t>((*dst)[e]) * k;
    const double* b = S.data.data() + static_cast<std::size_t>((*src)[e]) * k;
    const double* c = R.data.data() + static_cast<std::size_t>((*row)[e]) * k;
    double* o = out.data.data() + e * k;
    double* mx = seg_max.data.data() + static_cast<std::size_t>((*dst)[e]) * k;
    for (std::size_t h = 0; h < k; ++h) {
      const double x = a[h] + b[h] + c[h];
      const bool pos = x > 0.0;
      (*positive)[e * k + h] = pos;
      o[h] = pos ? x : slope * x;
      mx[h] = std::max(mx[h], o[h]);
    }
  }
  Matrix seg_sum(num_nodes, k);
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t d = static_cast<std::size_t>((*dst)[e]) * k;
    double* o = out.data.data() + e * k;
    for (std::size_t h = 0; h < k; ++h) {
      o[h] = std::exp(o[h] - seg_max.data[d + h]);
      seg_sum.data[d + h] += o[h];
    }
  }
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t d = static_cast<std::size_t>((*dst)[e]) * k;
    double* o = out.data.data() + e * k;
    for (std::size_t h = 0; h < k; ++h) o[h] /= seg_sum.data[d + h];
  }

  const std::size_t id = s_dst.id(), is = s_src.id(), ir = s_edge.id();
  const bool tracked = s_dst.requires_grad() || s_src.requires_grad() || s_edge.requires_grad();
  return s_dst.tape().record(
      std::move(out), tracked,
      [id, is, ir, dst, src, row, positive, num_nodes, slope](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& w = t.value(self);
        const std::size_t k = g.cols;
        const std::size_t m = g.rows;
        Matrix dot(num_nodes, k);
        for (std::size_t e = 0; e < m; ++e) {
          const std::size_t d = static_cast<std::size_t>((*dst)[e]) * k;
          for (std::size_t h = 0; h < k; ++h) dot.data[d + h] += w.data[e * k + h] * g.data[e * k + h];
        }
        Matrix* gd = t.requires_grad(id) ? &t.grad_acc(id) : nullptr;
        Matrix* gs = t.requires_grad(is) ? &t.grad_acc(is) : nullptr;
        Matrix* gr = t.requires_grad(ir) ? &t.grad_acc(ir) : nullptr;
        for (std::size_t e = 0; e < m; ++e) {
          const std::size_t d = static_cast<std::size_t>((*dst)[e]) * k;
          const std::size_t s = static_cast<std::size_t>((*src)[e]) * k;
          const std::size_t r = static_cast<std::size_t>((*row)[e]) * k;
          for (std::size_t h = 0; h < k; ++h) {
            const std::size_t i = e * k + h;
            double gx = w.data[i] * (g.data[i] - dot.data[d + h]);
            if (!(*positive)[i]) gx *= slope;
            if (gd) gd->data[d + h] += gx;
            if (gs) gs->data[s + h] += gx;
            if (gr) gr->data[r + h] += gx;
          }
        }
      });
}

Var edge_aggregate(Var alpha, Var z, IndexPtr src, IndexPtr dst, std::size_t num_out) {
  require_same_tape(alpha, z, "edge_aggregate");
  const Matrix& Al = alpha.value();
  const Matrix& Z = z.value();
  const std::size_t heads = Al.cols;
  if (src->size() != Al.rows || dst->size() != Al.rows || heads == 0 || Z.cols % heads != 0) {
    shape_fail("edge_aggregate", Al, Z);
  }
  check_index(*src, Z.rows, "edge_aggregate(src)");
  check_index(*dst, num_out, "edge_aggregate(dst)");
  const std::size_t d = Z.cols;
  const std::size_t w = d / heads;
  Matrix out(num_out, d);
  for (std::size_t e = 0; e < Al.rows; ++e) {
    const double* zr = Z.data.data() + static_cast<std::size_t>((*src)[e]) * d;
    double* orow = out.data.data() + static_cast<std::size_t>((*dst)[e]) * d;
    for (std::size_t k = 0; k < heads; ++k) {
      const double a = Al(e, k);
      for (std::size_t c = 0; c < w; ++c) orow[k * w + c] += a * zr[k * w + c];
    }
  }
  const std::size_t ial = alpha.id(), iz = z.id();
  return z.tape().record(
      std::move(out), alpha.requires_grad() || z.requires_grad(),
      [ial, iz, src, dst, heads, w, d](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& Al = t.value(ial);
        const Matrix& Z = t.value(iz);
        const bool need_alpha = t.requires_grad(ial);
        const bool need_z = t.requires_grad(iz);
        Matrix* ga = need_alpha ? &t.grad_acc(ial) : nullptr;
        Matrix* gz = need_z ? &t.grad_acc(iz) : nullptr;
        for (std::size_t e = 0; e < Al.rows; ++e) {
          const auto s = static_cast<std::size_t>((*src)[e]);
          const double* grow = g.data.data() + static_cast<std::size_t>((*dst)[e]) * d;
          const double* zr = Z.data.data() + s * d;
          const double* ar = Al.data.data() + e * heads;
          if (need_alpha) {
            double* gar = ga->data.data() + e * heads;
            for (std::size_t k = 0; k < heads; ++k) {
              double acc = 0.0;
              for (std::size_t c = k * w; c < (k + 1) * w; ++c) acc += grow[c] * zr[c];
              gar[k] += acc;
            }
          }
          if (need_z) {
            double* gzr = gz->data.data() + s * d;
            for (std::size_t k = 0; k < heads; ++k) {
              const double a = ar[k];
              for (std::size_t c = k * w; c < (k + 1) * w; ++c) gzr[c] += a * grow[c];
            }
          }
        }
      });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const Matrix& A = a.value();
  auto mask = std::make_shared<std::vector<double>>(A.size());
  std::bernoulli_distribution keep(1.0 - rate);
  const double kept = 1.0 / (1.0 - rate);
  Matrix out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) {
    (*mask)[i] = keep(rng) ? kept : 0.0;
    out.data[i] = A.data[i] * (*mask)[i];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, mask](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_acc(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * (*mask)[i];
  });
}

Var binary_cross_entropy(Var p, IndexPtr ids, const std::vector<double>& labels, double clamp) {
  const Matrix& P = p.value();
  if (P.cols != 1) throw ShapeError("binary_cross_entropy: expected n×1 probabilities, got " + P.shape_str());
  if (ids->empty()) throw std::invalid_argument("binary_cross_entropy: empty labeled set");
  if (ids->size() != labels.size()) {
    throw ShapeError("binary_cross_entropy: " + std::to_string(ids->size()) + " ids but " +
                     std::to_string(labels.size()) + " labels");
  }
  check_index(*ids, P.rows, "binary_cross_entropy");
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) {
      throw std::invalid_argument("binary_cross_entropy: label " + std::to_string(y) + " not in {0,1}");
    }
  }
  const double m = static_cast<double>(ids->size());
  auto dloss = std::make_shared<std::vector<double>>(ids->size());
  double total = 0.0;
  for (std::size_t i = 0; i < ids->size(); ++i) {
    const double raw = P.data[static_cast<std::size_t>((*ids)[i])];
    const double pc = std::clamp(raw, clamp, 1.0 - clamp);
    const double y = labels[i];
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    const bool clamped = raw < clamp || raw > 1.0 - clamp;
    (*dloss)[i] = clamped ? 0.0 : (-y / pc + (1.0 - y) / (1.0 - pc)) / m;
  }
  const std::size_t ip = p.id();
  return p.tape().record(Matrix(1, 1, total / m), p.requires_grad(),
                         [ip, ids, dloss](Tape& t, std::size_t self) {
                           const double g = t.grad(self).data[0];
                           Matrix& gp = t.grad_acc(ip);
                           for (std::size_t i = 0; i < ids->size(); ++i)
                             gp.data[static_cast<std::size_t>((*ids)[i])] += g * (*dloss)[i];
                         });
}

}  // namespace hetcs::ad
