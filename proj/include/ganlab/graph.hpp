#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ganlab/blas.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Primitive operations. Everything else (group norm, row normalization,
// variance, ...) is composed from these, so backward rules emitted as
// graph nodes stay differentiable to any order.
enum class Op : uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddC,
  kExp,
  kLog,
  kSqrt,
  kRecip,
  kAbs,
  kSign,
  kMaxC,
  kStepC,
  kElu,
  kSumAll,
  kSumRows,
  kSumCols,
  kBcastRow,
  kBcastCol,
  kBcastScalar,
  kConcat0,
  kSliceRows,
  kPadRows,
  kReshape,
  kSubCol,
  kMulCol,
  kMulRow,
  kAddRow,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddC: return "addc";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kRecip: return "recip";
    case Op::kAbs: return "abs";
    case Op::kSign: return "sign";
    case Op::kMaxC: return "maxc";
    case Op::kStepC: return "stepc";
    case Op::kElu: return "elu";
    case Op::kSumAll: return "sum_all";
    case Op::kSumRows: return "sum_rows";
    case Op::kSumCols: return "sum_cols";
    case Op::kBcastRow: return "bcast_row";
    case Op::kBcastCol: return "bcast_col";
    case Op::kBcastScalar: return "bcast_scalar";
    case Op::kConcat0: return "concat0";
    case Op::kSliceRows: return "slice_rows";
    case Op::kPadRows: return "pad_rows";
    case Op::kReshape: return "reshape";
    case Op::kSubCol: return "sub_col";
    case Op::kMulCol: return "mul_col";
    case Op::kMulRow: return "mul_row";
    case Op::kAddRow: return "add_row";
  }
  return "?";
}

class Var;

struct Node {
  Op op = Op::kLeaf;
  Tensor value;
  std::vector<Var> inputs;
  double c = 0.0;        // scalar parameter (scale factor, clamp constant)
  int64_t a0 = 0, a1 = 0;  // slice/pad bounds, broadcast extent
  bool ta = false, tb = false;  // matmul transpose flags
  bool needs_grad = false;
  uint64_t id = 0;
};

// Handle to a tape node. Copies share the node; tapes are built eagerly
// and are per-thread (node ids order creation, which is a topological
// order of the DAG).
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  uint64_t id() const { return node_->id; }
  bool needs_grad() const { return node_->needs_grad; }
  Node* get() const { return node_.get(); }
  Node* operator->() const { return node_.get(); }

private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline uint64_t& node_counter() {
  thread_local uint64_t c = 0;
  return c;
}

inline bool& finite_check_flag() {
#ifndef NDEBUG
  thread_local bool f = true;
#else
  thread_local bool f = false;
#endif
  return f;
}

inline Var make_node(Op op, Tensor value, std::vector<Var> inputs,
                     double c = 0.0, int64_t a0 = 0, int64_t a1 = 0,
                     bool ta = false, bool tb = false) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->c = c;
  n->a0 = a0;
  n->a1 = a1;
  n->ta = ta;
  n->tb = tb;
  n->id = ++node_counter();
  for (const Var& in : n->inputs)
    if (in.needs_grad()) {
      n->needs_grad = true;
      break;
    }
  if (finite_check_flag() && !n->value.all_finite())
    throw numeric_error(std::string("non-finite output of op '") + op_name(op) +
                        "' at node " + std::to_string(n->id));
  return Var(std::move(n));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// Toggle per-op non-finite detection (on by default in debug builds).
inline void set_check_finite(bool on) { detail::finite_check_flag() = on; }
inline bool check_finite_enabled() { return detail::finite_check_flag(); }

inline Var leaf(Tensor t, bool requires_grad) {
  Var v = detail::make_node(Op::kLeaf, std::move(t), {});
  v->needs_grad = requires_grad;
  return v;
}

inline Var constant(Tensor t) { return leaf(std::move(t), false); }
inline Var constant(double x) { return leaf(Tensor::scalar(x), false); }
inline Var detach(const Var& v) { return constant(v.value()); }

// ---------------------------------------------------------------------
// Primitive op constructors (eager: value computed at build time).

inline Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2)
    throw shape_error("matmul: operands must be rank 2");
  const int64_t m = ta ? A.cols() : A.rows();
  const int64_t ka = ta ? A.rows() : A.cols();
  const int64_t kb = tb ? B.cols() : B.rows();
  const int64_t n = tb ? B.rows() : B.cols();
  if (ka != kb)
    throw shape_error("matmul: inner dimensions " + std::to_string(ka) + " vs " +
                      std::to_string(kb));
  Tensor out = Tensor::uninit({m, n});
  gemm(ta, tb, m, n, ka, A.data(), B.data(), out.mutable_data());
  return detail::make_node(Op::kMatMul, std::move(out), {a, b}, 0, 0, 0, ta, tb);
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] + pb[i];
  });
  return detail::make_node(Op::kAdd, std::move(out), {a, b});
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] - pb[i];
  });
  return detail::make_node(Op::kSub, std::move(out), {a, b});
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] * pb[i];
  });
  return detail::make_node(Op::kMul, std::move(out), {a, b});
}

inline Var scale(const Var& a, double c) {
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] * c;
  });
  return detail::make_node(Op::kScale, std::move(out), {a}, c);
}

inline Var addc(const Var& a, double c) {
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] + c;
  });
  return detail::make_node(Op::kAddC, std::move(out), {a}, c);
}

namespace detail {
template <typename F>
Var unary(Op op, const Var& a, F&& f, double c = 0.0) {
  Tensor out = Tensor::uninit(a.shape());
  const double* pa = a.value().data();
  double* po = out.mutable_data();
  elementwise(out.numel(), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = f(pa[i]);
  });
  return make_node(op, std::move(out), {a}, c);
}
}  // namespace detail

inline Var exp(const Var& a) {
  return detail::unary(Op::kExp, a, [](double x) { return std::exp(x); });
}
inline Var log(const Var& a) {
  return detail::unary(Op::kLog, a, [](double x) { return std::log(x); });
}
inline Var sqrt(const Var& a) {
  return detail::unary(Op::kSqrt, a, [](double x) { return std::sqrt(x); });
}
inline Var recip(const Var& a) {
  return detail::unary(Op::kRecip, a, [](double x) { return 1.0 / x; });
}
inline Var abs(const Var& a) {
  return detail::unary(Op::kAbs, a, [](double x) { return std::abs(x); });
}
inline Var sign(const Var& a) {
  return detail::unary(Op::kSign, a,
                       [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
inline Var maxc(const Var& a, double c) {
  return detail::unary(Op::kMaxC, a, [c](double x) { return x > c ? x : c; }, c);
}
inline Var stepc(const Var& a, double c) {
  return detail::unary(Op::kStepC, a, [c](double x) { return x > c ? 1.0 : 0.0; }, c);
}
inline Var elu(const Var& a) {
  Tensor out = Tensor::uninit(a.shape());
  detail::vec_elu(a.value().data(), out.mutable_data(), out.numel());
  return detail::make_node(Op::kElu, std::move(out), {a});
}

inline Var sum_all(const Var& a) {
  double s = 0;
  const double* pa = a.value().data();
  for (int64_t i = 0; i < a.value().numel(); ++i) s += pa[i];
  return detail::make_node(Op::kSumAll, Tensor::scalar(s), {a});
}

inline Var sum_rows(const Var& a) {  // (n,m) -> (m), sums over axis 0
  const Tensor& A = a.value();
  if (A.rank() != 2) throw shape_error("sum_rows: rank-2 input required");
  Tensor out = Tensor::zeros({A.cols()});
  double* po = out.mutable_data();
  for (int64_t i = 0; i < A.rows(); ++i) {
    const double* row = A.data() + i * A.cols();
    for (int64_t j = 0; j < A.cols(); ++j) po[j] += row[j];
  }
  return detail::make_node(Op::kSumRows, std::move(out), {a});
}

inline Var sum_cols(const Var& a) {  // (n,m) -> (n), sums over axis 1
  const Tensor& A = a.value();
  if (A.rank() != 2) throw shape_error("sum_cols: rank-2 input required");
  Tensor out = Tensor::uninit({A.rows()});
  double* po = out.mutable_data();
  for (int64_t i = 0; i < A.rows(); ++i) {
    const double* row = A.data() + i * A.cols();
    double s = 0;
    for (int64_t j = 0; j < A.cols(); ++j) s += row[j];
    po[i] = s;
  }
  return detail::make_node(Op::kSumCols, std::move(out), {a});
}

inline Var bcast_row(const Var& a, int64_t n) {  // (m) -> (n,m)
  const Tensor& A = a.value();
  if (A.rank() != 1) throw shape_error("bcast_row: rank-1 input required");
  const int64_t m = A.dim(0);
  Tensor out = Tensor::uninit({n, m});
  double* po = out.mutable_data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) po[i * m + j] = A.at(j);
  return detail::make_node(Op::kBcastRow, std::move(out), {a}, 0, n);
}

inline Var bcast_col(const Var& a, int64_t m) {  // (n) -> (n,m)
  const Tensor& A = a.value();
  if (A.rank() != 1) throw shape_error("bcast_col: rank-1 input required");
  const int64_t n = A.dim(0);
  Tensor out = Tensor::uninit({n, m});
  double* po = out.mutable_data();
  for (int64_t i = 0; i < n; ++i) {
    const double v = A.at(i);
    for (int64_t j = 0; j < m; ++j) po[i * m + j] = v;
  }
  return detail::make_node(Op::kBcastCol, std::move(out), {a}, 0, m);
}

inline Var bcast_scalar(const Var& a, Shape shape) {
  if (a.value().numel() != 1) throw shape_error("bcast_scalar: scalar input required");
  Tensor out = Tensor::full(std::move(shape), a.value().item());
  return detail::make_node(Op::kBcastScalar, std::move(out), {a});
}

inline Var concat0(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
    throw shape_error("concat0: rank-2 inputs with equal column counts required");
  Tensor out = Tensor::uninit({A.rows() + B.rows(), A.cols()});
  double* po = out.mutable_data();
  std::copy(A.data(), A.data() + A.numel(), po);
  std::copy(B.data(), B.data() + B.numel(), po + A.numel());
  return detail::make_node(Op::kConcat0, std::move(out), {a, b});
}

inline Var slice_rows(const Var& a, int64_t begin, int64_t end) {
  const Tensor& A = a.value();
  if (A.rank() != 2) throw shape_error("slice_rows: rank-2 input required");
  if (begin < 0 || end <= begin || end > A.rows())
    throw shape_error("slice_rows: bad range [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") for " + std::to_string(A.rows()) +
                      " rows");
  Tensor out = Tensor::uninit({end - begin, A.cols()});
  std::copy(A.data() + begin * A.cols(), A.data() + end * A.cols(),
            out.mutable_data());
  return detail::make_node(Op::kSliceRows, std::move(out), {a}, 0, begin, end);
}

inline Var pad_rows(const Var& a, int64_t offset, int64_t total) {
  const Tensor& A = a.value();
  if (A.rank() != 2) throw shape_error("pad_rows: rank-2 input required");
  if (offset < 0 || offset + A.rows() > total)
    throw shape_error("pad_rows: input does not fit");
  Tensor out = Tensor::zeros({total, A.cols()});
  std::copy(A.data(), A.data() + A.numel(),
            out.mutable_data() + offset * A.cols());
  return detail::make_node(Op::kPadRows, std::move(out), {a}, 0, offset, total);
}

inline Var reshape(const Var& a, Shape shape) {
  return detail::make_node(Op::kReshape, a.value().reshaped(std::move(shape)), {a});
}

namespace detail {
inline void require_col_vec(const Tensor& a, const Tensor& s, const char* op) {
  if (a.rank() != 2 || s.rank() != 1 || s.dim(0) != a.rows())
    throw shape_error(std::string(op) + ": need (n,m) and (n), got " +
                      shape_str(a.shape()) + " and " + shape_str(s.shape()));
}
inline void require_row_vec(const Tensor& a, const Tensor& r, const char* op) {
  if (a.rank() != 2 || r.rank() != 1 || r.dim(0) != a.cols())
    throw shape_error(std::string(op) + ": need (n,m) and (m), got " +
                      shape_str(a.shape()) + " and " + shape_str(r.shape()));
}
}  // namespace detail

// y[i,j] = a[i,j] - s[i]
inline Var sub_col(const Var& a, const Var& s) {
  detail::require_col_vec(a.value(), s.value(), "sub_col");
  const int64_t n = a.value().rows(), m = a.value().cols();
  Tensor out = Tensor::uninit({n, m});
  const double* pa = a.value().data();
  const double* ps = s.value().data();
  double* po = out.mutable_data();
  elementwise(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double v = ps[i];
      for (int64_t j = 0; j < m; ++j) po[i * m + j] = pa[i * m + j] - v;
    }
  });
  return detail::make_node(Op::kSubCol, std::move(out), {a, s});
}

// y[i,j] = a[i,j] * s[i]
inline Var mul_col(const Var& a, const Var& s) {
  detail::require_col_vec(a.value(), s.value(), "mul_col");
  const int64_t n = a.value().rows(), m = a.value().cols();
  Tensor out = Tensor::uninit({n, m});
  const double* pa = a.value().data();
  const double* ps = s.value().data();
  double* po = out.mutable_data();
  elementwise(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const double v = ps[i];
      for (int64_t j = 0; j < m; ++j) po[i * m + j] = pa[i * m + j] * v;
    }
  });
  return detail::make_node(Op::kMulCol, std::move(out), {a, s});
}

// y[i,j] = a[i,j] * r[j]
inline Var mul_row(const Var& a, const Var& r) {
  detail::require_row_vec(a.value(), r.value(), "mul_row");
  const int64_t n = a.value().rows(), m = a.value().cols();
  Tensor out = Tensor::uninit({n, m});
  const double* pa = a.value().data();
  const double* pr = r.value().data();
  double* po = out.mutable_data();
  elementwise(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i)
      for (int64_t j = 0; j < m; ++j) po[i * m + j] = pa[i * m + j] * pr[j];
  });
  return detail::make_node(Op::kMulRow, std::move(out), {a, r});
}

// y[i,j] = a[i,j] + r[j]
inline Var add_row(const Var& a, const Var& r) {
  detail::require_row_vec(a.value(), r.value(), "add_row");
  const int64_t n = a.value().rows(), m = a.value().cols();
  Tensor out = Tensor::uninit({n, m});
  const double* pa = a.value().data();
  const double* pr = r.value().data();
  double* po = out.mutable_data();
  elementwise(n, [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i)
      for (int64_t j = 0; j < m; ++j) po[i * m + j] = pa[i * m + j] + pr[j];
  });
  return detail::make_node(Op::kAddRow, std::move(out), {a, r});
}

// ---------------------------------------------------------------------
// Composed helpers.

inline Var neg(const Var& a) { return scale(a, -1.0); }
inline Var square(const Var& a) { return mul(a, a); }

inline Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().numel()));
}

inline Var mean_rows(const Var& a) {  // column means, (n,m) -> (m)
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.value().rows()));
}

inline Var mean_cols(const Var& a) {  // row means, (n,m) -> (n)
  return scale(sum_cols(a), 1.0 / static_cast<double>(a.value().cols()));
}

inline Var dot_all(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

// ELU derivative recovered from the ELU output itself:
// elu'(x) = 1 for x > 0, e^x = elu(x) + 1 otherwise, i.e. 1 + min(y, 0).
inline Var elu_unit_grad(const Var& elu_out) {
  return addc(sub(elu_out, maxc(elu_out, 0.0)), 1.0);
}

inline Var row_l2_norms(const Var& a) {  // (n,m) -> (n)
  return sqrt(sum_cols(square(a)));
}

// Row-wise x / ||x||. Rows with norm <= eps_degenerate are an error:
// a collapsed embedding should fail loudly rather than be clamped.
inline Var l2_normalize_rows(const Var& a, double eps_degenerate = 1e-12) {
  Var norms = row_l2_norms(a);
  const Tensor& nv = norms.value();
  for (int64_t i = 0; i < nv.numel(); ++i)
    if (!(nv.at(i) > eps_degenerate))
      throw numeric_error("degenerate embedding: row " + std::to_string(i) +
                          " has L2 norm " + std::to_string(nv.at(i)));
  return mul_col(a, recip(norms));
}

// Per-sample group normalization with affine parameters. Mean/variance
// are functions of the input, so their gradient paths are kept intact
// by construction.
inline Var group_norm(const Var& x, int64_t group_size, const Var& gamma,
                      const Var& beta, double eps = 1e-5) {
  const Tensor& X = x.value();
  if (X.rank() != 2) throw shape_error("group_norm: rank-2 input required");
  const int64_t n = X.rows(), d = X.cols();
  if (group_size <= 0 || d % group_size != 0)
    throw shape_error("group_norm: width " + std::to_string(d) +
                      " not divisible by group size " + std::to_string(group_size));
  if (gamma.value().numel() != d || beta.value().numel() != d)
    throw shape_error("group_norm: affine parameter width mismatch");
  Var xr = reshape(x, {n * (d / group_size), group_size});
  Var mu = mean_cols(xr);
  Var centered = sub_col(xr, mu);
  Var var = mean_cols(square(centered));
  Var inv_sd = recip(sqrt(addc(var, eps)));
  Var normalized = reshape(mul_col(centered, inv_sd), {n, d});
  return add_row(mul_row(normalized, gamma), beta);
}

inline Var add_bias_row(const Var& x, const Var& b) { return add_row(x, b); }

}  // namespace ganlab
