#ifndef XDSP_TAPE_HPP
#define XDSP_TAPE_HPP

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xdsp/errors.hpp"
#include "xdsp/tensor.hpp"

namespace xdsp::num {

// Sequential reductions (index order) so results reproduce bit-for-bit.
template <typename S>
S seq_sum(const Mat<S>& m) {
  S acc = S(0);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) acc += m(i, j);
  return acc;
}

template <typename S>
S seq_dot(const Mat<S>& a, const Mat<S>& b) {
  S acc = S(0);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) acc += a(i, j) * b(i, j);
  return acc;
}

template <typename S>
class Tape;

// Handle into a tape. Cheap to copy; valid as long as the tape lives.
template <typename S>
struct Value {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Tensor<S>& tensor() const { return tape->val(id); }
  Index rows() const { return tensor().rows(); }
  Index cols() const { return tensor().cols(); }
  S scalar() const { return tensor().value(); }
};

// Records primitive ops in execution order; replaying backward visits each
// recorded op exactly once and accumulates gradients additively. Single
// owner, single use: build a graph, call backward, discard.
template <typename S>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor<S> value;
    Mat<S> grad;
    BackFn back;        // null for leaves and constants
    std::string name;   // set for trainable leaves
  };

  Value<S> constant(Tensor<S> v) { return {this, add(std::move(v), nullptr, "")}; }

  Value<S> param(const std::string& name, Tensor<S> v) {
    if (name.empty()) throw ContractError("param: empty name");
    if (leaves_.count(name)) throw ContractError("param: duplicate name " + name);
    int id = add(std::move(v), nullptr, name);
    leaves_.emplace(name, id);
    return {this, id};
  }

  int add(Tensor<S> v, BackFn back, std::string name) {
    nodes_.push_back(Node{std::move(v), Mat<S>(), std::move(back), std::move(name)});
    Node& n = nodes_.back();
    n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<S>& val(int id) const { return nodes_[id].value; }
  Mat<S>& grad(int id) { return nodes_[id].grad; }
  const std::map<std::string, int>& leaves() const { return leaves_; }
  std::size_t size() const { return nodes_.size(); }

  void run_backward(int loss_id) {
    if (nodes_[loss_id].value.size() != 1)
      throw ContractError("backward: loss is not a scalar, shape " +
                          shape_str(nodes_[loss_id].value.shape()));
    nodes_[loss_id].grad(0, 0) = S(1);
    for (int id = loss_id; id >= 0; --id)
      if (nodes_[id].back) nodes_[id].back(*this, id);
  }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> leaves_;
};

namespace detail {

template <typename S>
Tensor<S> with_rank(Mat<S> m, int rank) {
  switch (rank) {
    case 0: return Tensor<S>::scalar(m(0, 0));
    case 1: return Tensor<S>::vector(m);
    default: return Tensor<S>::matrix(std::move(m));
  }
}

template <typename S>
Tape<S>& same_tape(Value<S> a, Value<S> b) {
  if (a.tape != b.tape || a.tape == nullptr)
    throw ContractError("op: operands from different tapes");
  return *a.tape;
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <typename S>
Value<S> matmul(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  const Tensor<S>& A = t.val(a.id);
  const Tensor<S>& B = t.val(b.id);
  if (A.cols() != B.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(A.shape()) +
                         " x " + shape_str(B.shape()));
  Mat<S> r = A.mat() * B.mat();
  int rank = (B.rank() == 1 && A.rank() == 2) ? 1 : (r.size() == 1 ? 0 : 2);
  int out = t.add(detail::with_rank<S>(std::move(r), rank),
                  [ai = a.id, bi = b.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    tt.grad(ai).noalias() += g * tt.val(bi).mat().transpose();
                    tt.grad(bi).noalias() += tt.val(ai).mat().transpose() * g;
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> add(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape(t.val(a.id), t.val(b.id), "add");
  Mat<S> r = t.val(a.id).mat() + t.val(b.id).mat();
  int out = t.add(detail::with_rank<S>(std::move(r), t.val(a.id).rank()),
                  [ai = a.id, bi = b.id](Tape<S>& tt, int self) {
                    tt.grad(ai) += tt.grad(self);
                    tt.grad(bi) += tt.grad(self);
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> sub(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape(t.val(a.id), t.val(b.id), "sub");
  Mat<S> r = t.val(a.id).mat() - t.val(b.id).mat();
  int out = t.add(detail::with_rank<S>(std::move(r), t.val(a.id).rank()),
                  [ai = a.id, bi = b.id](Tape<S>& tt, int self) {
                    tt.grad(ai) += tt.grad(self);
                    tt.grad(bi) -= tt.grad(self);
                  },
                  "");
  return {&t, out};
}

// Hadamard product.
template <typename S>
Value<S> cmul(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape(t.val(a.id), t.val(b.id), "cmul");
  Mat<S> r = t.val(a.id).mat().cwiseProduct(t.val(b.id).mat());
  int out = t.add(detail::with_rank<S>(std::move(r), t.val(a.id).rank()),
                  [ai = a.id, bi = b.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    tt.grad(ai) += g.cwiseProduct(tt.val(bi).mat());
                    tt.grad(bi) += g.cwiseProduct(tt.val(ai).mat());
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> scale(Value<S> a, S k) {
  Tape<S>& t = *a.tape;
  Mat<S> r = t.val(a.id).mat() * k;
  int out = t.add(detail::with_rank<S>(std::move(r), t.val(a.id).rank()),
                  [ai = a.id, k](Tape<S>& tt, int self) { tt.grad(ai) += tt.grad(self) * k; },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> neg(Value<S> a) {
  return scale(a, S(-1));
}

template <typename S>
Value<S> one_minus(Value<S> a) {
  Tape<S>& t = *a.tape;
  Mat<S> r = Mat<S>::Constant(t.val(a.id).rows(), t.val(a.id).cols(), S(1)) - t.val(a.id).mat();
  int out = t.add(detail::with_rank<S>(std::move(r), t.val(a.id).rank()),
                  [ai = a.id](Tape<S>& tt, int self) { tt.grad(ai) -= tt.grad(self); }, "");
  return {&t, out};
}

// m (r x c) plus v (r) broadcast over columns.
template <typename S>
Value<S> add_colwise(Value<S> m, Value<S> v) {
  Tape<S>& t = detail::same_tape(m, v);
  const Tensor<S>& M = t.val(m.id);
  const Tensor<S>& V = t.val(v.id);
  if (V.cols() != 1 || V.rows() != M.rows())
    throw DimensionError("add_colwise: " + shape_str(M.shape()) + " vs " + shape_str(V.shape()));
  Mat<S> r = M.mat();
  r.colwise() += Vec<S>(V.mat().col(0));
  int out = t.add(Tensor<S>::matrix(std::move(r)),
                  [mi = m.id, vi = v.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    tt.grad(mi) += g;
                    Mat<S>& gv = tt.grad(vi);
                    for (Index i = 0; i < g.rows(); ++i) {
                      S acc = S(0);
                      for (Index j = 0; j < g.cols(); ++j) acc += g(i, j);
                      gv(i, 0) += acc;
                    }
                  },
                  "");
  return {&t, out};
}

enum class UnaryOp { tanh, sigmoid, exp, log };

template <typename S>
Value<S> apply_unary(UnaryOp op, Value<S> a) {
  Tape<S>& t = *a.tape;
  const Mat<S>& x = t.val(a.id).mat();
  Mat<S> y;
  switch (op) {
    case UnaryOp::tanh: y = x.array().tanh().matrix(); break;
    case UnaryOp::sigmoid: y = (S(1) / (S(1) + (-x.array()).exp())).matrix(); break;
    case UnaryOp::exp:
      y = x.array().exp().matrix();
      if (!y.allFinite()) throw NonFiniteError("exp: non-finite result");
      break;
    case UnaryOp::log:
      for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j)
          if (!(x(i, j) > S(0)))
            throw ValueDomainError("log: non-positive entry at (" + std::to_string(i) + "," +
                                   std::to_string(j) + ")");
      y = x.array().log().matrix();
      break;
  }
  int out = t.add(detail::with_rank<S>(std::move(y), t.val(a.id).rank()),
                  [ai = a.id, op](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    const Mat<S>& yv = tt.val(self).mat();
                    switch (op) {
                      case UnaryOp::tanh:
                        tt.grad(ai).array() += g.array() * (S(1) - yv.array().square());
                        break;
                      case UnaryOp::sigmoid:
                        tt.grad(ai).array() += g.array() * yv.array() * (S(1) - yv.array());
                        break;
                      case UnaryOp::exp:
                        tt.grad(ai).array() += g.array() * yv.array();
                        break;
                      case UnaryOp::log:
                        tt.grad(ai).array() += g.array() / tt.val(ai).mat().array();
                        break;
                    }
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> tanh_(Value<S> a) {
  return apply_unary(UnaryOp::tanh, a);
}
template <typename S>
Value<S> sigmoid_(Value<S> a) {
  return apply_unary(UnaryOp::sigmoid, a);
}
template <typename S>
Value<S> exp_(Value<S> a) {
  return apply_unary(UnaryOp::exp, a);
}
template <typename S>
Value<S> log_(Value<S> a) {
  return apply_unary(UnaryOp::log, a);
}

namespace detail {

// Max-subtracted softmax of one contiguous row/column, sequential sums.
template <typename S>
void softmax_span(const S* x, S* y, Index n) {
  S m = x[0];
  for (Index i = 1; i < n; ++i) m = std::max(m, x[i]);
  S z = S(0);
  for (Index i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (Index i = 0; i < n; ++i) y[i] /= z;
}

}  // namespace detail

// Per-row softmax; rows of the result sum to one.
template <typename S>
Value<S> softmax_rows(Value<S> a) {
  Tape<S>& t = *a.tape;
  const Mat<S>& x = t.val(a.id).mat();
  if (!x.allFinite()) throw ContractError("softmax_rows: non-finite input");
  Mat<S> y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    detail::softmax_span(x.row(i).data(), y.row(i).data(), x.cols());  // row-major rows are contiguous
  int out = t.add(Tensor<S>::matrix(std::move(y)),
                  [ai = a.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    const Mat<S>& yv = tt.val(self).mat();
                    Mat<S>& gx = tt.grad(ai);
                    for (Index i = 0; i < yv.rows(); ++i) {
                      S d = S(0);
                      for (Index j = 0; j < yv.cols(); ++j) d += yv(i, j) * g(i, j);
                      for (Index j = 0; j < yv.cols(); ++j)
                        gx(i, j) += yv(i, j) * (g(i, j) - d);
                    }
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> softmax_vec(Value<S> a) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& X = t.val(a.id);
  if (X.cols() != 1) throw ContractError("softmax_vec: expected a vector");
  if (!X.mat().allFinite()) throw ContractError("softmax_vec: non-finite input");
  Mat<S> y(X.rows(), 1);
  detail::softmax_span(X.mat().data(), y.data(), X.rows());
  int out = t.add(Tensor<S>::vector(y),
                  [ai = a.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    const Mat<S>& yv = tt.val(self).mat();
                    S d = S(0);
                    for (Index i = 0; i < yv.rows(); ++i) d += yv(i, 0) * g(i, 0);
                    for (Index i = 0; i < yv.rows(); ++i)
                      tt.grad(ai)(i, 0) += yv(i, 0) * (g(i, 0) - d);
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> logsumexp_vec(Value<S> a) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& X = t.val(a.id);
  if (X.cols() != 1) throw ContractError("logsumexp_vec: expected a vector");
  const Mat<S>& x = X.mat();
  S m = x(0, 0);
  for (Index i = 1; i < x.rows(); ++i) m = std::max(m, x(i, 0));
  S z = S(0);
  for (Index i = 0; i < x.rows(); ++i) z += std::exp(x(i, 0) - m);
  S lse = m + std::log(z);
  int out = t.add(Tensor<S>::scalar(lse),
                  [ai = a.id](Tape<S>& tt, int self) {
                    S g = tt.grad(self)(0, 0);
                    S lse_v = tt.val(self).value();
                    const Mat<S>& xv = tt.val(ai).mat();
                    for (Index i = 0; i < xv.rows(); ++i)
                      tt.grad(ai)(i, 0) += g * std::exp(xv(i, 0) - lse_v);
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> dot(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  detail::require_same_shape(t.val(a.id), t.val(b.id), "dot");
  S r = seq_dot(t.val(a.id).mat(), t.val(b.id).mat());
  int out = t.add(Tensor<S>::scalar(r),
                  [ai = a.id, bi = b.id](Tape<S>& tt, int self) {
                    S g = tt.grad(self)(0, 0);
                    tt.grad(ai) += g * tt.val(bi).mat();
                    tt.grad(bi) += g * tt.val(ai).mat();
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> sum(Value<S> a) {
  Tape<S>& t = *a.tape;
  S r = seq_sum(t.val(a.id).mat());
  int out = t.add(Tensor<S>::scalar(r),
                  [ai = a.id](Tape<S>& tt, int self) {
                    tt.grad(ai).array() += tt.grad(self)(0, 0);
                  },
                  "");
  return {&t, out};
}

// m^T v for m (r x c), v (r): the attention score contraction.
template <typename S>
Value<S> vecmat(Value<S> v, Value<S> m) {
  Tape<S>& t = detail::same_tape(v, m);
  const Tensor<S>& V = t.val(v.id);
  const Tensor<S>& M = t.val(m.id);
  if (V.cols() != 1 || V.rows() != M.rows())
    throw DimensionError("vecmat: " + shape_str(V.shape()) + " vs " + shape_str(M.shape()));
  Mat<S> r = M.mat().transpose() * V.mat();
  int out = t.add(Tensor<S>::vector(r),
                  [vi = v.id, mi = m.id](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    tt.grad(vi).noalias() += tt.val(mi).mat() * g;
                    tt.grad(mi).noalias() += tt.val(vi).mat() * g.transpose();
                  },
                  "");
  return {&t, out};
}

// Stack two column vectors: [a; b].
template <typename S>
Value<S> concat_rows(Value<S> a, Value<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  const Tensor<S>& A = t.val(a.id);
  const Tensor<S>& B = t.val(b.id);
  if (A.cols() != 1 || B.cols() != 1) throw ContractError("concat_rows: expected vectors");
  Mat<S> r(A.rows() + B.rows(), 1);
  r.topRows(A.rows()) = A.mat();
  r.bottomRows(B.rows()) = B.mat();
  int out = t.add(Tensor<S>::vector(r),
                  [ai = a.id, bi = b.id, na = A.rows()](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    tt.grad(ai) += g.topRows(na);
                    tt.grad(bi) += g.bottomRows(g.rows() - na);
                  },
                  "");
  return {&t, out};
}

// Columns of equal height into one matrix.
template <typename S>
Value<S> hstack(const std::vector<Value<S>>& cols) {
  if (cols.empty()) throw ContractError("hstack: no columns");
  Tape<S>& t = *cols[0].tape;
  Index rows = t.val(cols[0].id).rows();
  Mat<S> r(rows, static_cast<Index>(cols.size()));
  std::vector<int> ids;
  ids.reserve(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const Tensor<S>& c = t.val(cols[j].id);
    if (c.cols() != 1 || c.rows() != rows) throw DimensionError("hstack: ragged columns");
    r.col(static_cast<Index>(j)) = c.mat();
    ids.push_back(cols[j].id);
  }
  int out = t.add(Tensor<S>::matrix(std::move(r)),
                  [ids](Tape<S>& tt, int self) {
                    const Mat<S>& g = tt.grad(self);
                    for (std::size_t j = 0; j < ids.size(); ++j)
                      tt.grad(ids[j]) += g.col(static_cast<Index>(j));
                  },
                  "");
  return {&t, out};
}

// Row r of a matrix as a column vector (embedding lookup).
template <typename S>
Value<S> row_of(Value<S> table, Index r) {
  Tape<S>& t = *table.tape;
  const Tensor<S>& T = t.val(table.id);
  if (r < 0 || r >= T.rows())
    throw VocabularyError("row_of: index " + std::to_string(r) + " out of range [0," +
                          std::to_string(T.rows()) + ")");
  Mat<S> v = T.mat().row(r).transpose();
  int out = t.add(Tensor<S>::vector(v),
                  [ti = table.id, r](Tape<S>& tt, int self) {
                    tt.grad(ti).row(r) += tt.grad(self).transpose();
                  },
                  "");
  return {&t, out};
}

template <typename S>
Value<S> pick(Value<S> v, Index i) {
  Tape<S>& t = *v.tape;
  const Tensor<S>& V = t.val(v.id);
  if (V.cols() != 1 || i < 0 || i >= V.rows())
    throw ContractError("pick: index " + std::to_string(i) + " out of range for " +
                        shape_str(V.shape()));
  int out = t.add(Tensor<S>::scalar(V.mat()(i, 0)),
                  [vi = v.id, i](Tape<S>& tt, int self) {
                    tt.grad(vi)(i, 0) += tt.grad(self)(0, 0);
                  },
                  "");
  return {&t, out};
}

// Gradients keyed by parameter name; keys are exactly the trainable leaves
// of the tape the set was computed from.
template <typename S>
struct GradientSet {
  std::map<std::string, Tensor<S>> grads;

  const Tensor<S>& at(const std::string& name) const {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("GradientSet: no gradient named " + name);
    return it->second;
  }
};

template <typename S>
GradientSet<S> backward(Tape<S>& tape, Value<S> loss) {
  if (loss.tape != &tape) throw ContractError("backward: loss from a different tape");
  tape.run_backward(loss.id);
  GradientSet<S> gs;
  for (const auto& [name, id] : tape.leaves()) {
    Mat<S> g = tape.grad(id);
    if (!g.allFinite()) throw NonFiniteError("backward: non-finite gradient for " + name);
    gs.grads.emplace(name, detail::with_rank<S>(std::move(g), tape.val(id).rank()));
  }
  return gs;
}

}  // namespace xdsp::num

#endif
