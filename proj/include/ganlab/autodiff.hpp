#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ganlab/graph.hpp"

namespace ganlab {

// Differentiation instrumentation. `passes` counts VJP/JVP/grad calls
// (one per call regardless of mechanism); `sweeps` counts raw adjoint
// or tangent traversals, so a double-VJP JVP shows up as one pass and
// two sweeps.
struct DiffCounters {
  uint64_t passes = 0;
  uint64_t sweeps = 0;
};

inline DiffCounters& diff_counters() {
  thread_local DiffCounters c;
  return c;
}

namespace detail {

// Cotangents for each input of `n`, given the node's adjoint `g`.
// Emitted as ordinary graph ops, so cotangent computations are
// themselves differentiable. `want[i]` gates work per input.
inline void emit_cotangents(const Var& n, const Var& g,
                            const std::vector<bool>& want,
                            const std::function<void(size_t, Var)>& accum) {
  const Var& a = n->inputs.size() > 0 ? n->inputs[0] : n;
  switch (n->op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      const Var& b = n->inputs[1];
      if (want[0])
        accum(0, n->ta ? matmul(b, g, n->tb, true) : matmul(g, b, false, !n->tb));
      if (want[1])
        accum(1, n->tb ? matmul(g, a, true, n->ta) : matmul(a, g, !n->ta, false));
      break;
    }
    case Op::kAdd:
      if (want[0]) accum(0, g);
      if (want[1]) accum(1, g);
      break;
    case Op::kSub:
      if (want[0]) accum(0, g);
      if (want[1]) accum(1, neg(g));
      break;
    case Op::kMul:
      if (want[0]) accum(0, mul(g, n->inputs[1]));
      if (want[1]) accum(1, mul(g, a));
      break;
    case Op::kScale:
      if (want[0]) accum(0, scale(g, n->c));
      break;
    case Op::kAddC:
      if (want[0]) accum(0, g);
      break;
    case Op::kExp:
      if (want[0]) accum(0, mul(g, n));
      break;
    case Op::kLog:
      if (want[0]) accum(0, mul(g, recip(a)));
      break;
    case Op::kSqrt:
      if (want[0]) accum(0, scale(mul(g, recip(n)), 0.5));
      break;
    case Op::kRecip:
      if (want[0]) accum(0, neg(mul(g, square(n))));
      break;
    case Op::kAbs:
      if (want[0]) accum(0, mul(g, sign(a)));
      break;
    case Op::kSign:
    case Op::kStepC:
      break;  // zero derivative almost everywhere
    case Op::kMaxC:
      if (want[0]) accum(0, mul(g, stepc(a, n->c)));
      break;
    case Op::kElu:
      if (want[0]) accum(0, mul(g, elu_unit_grad(n)));
      break;
    case Op::kSumAll:
      if (want[0]) accum(0, bcast_scalar(g, a.shape()));
      break;
    case Op::kSumRows:
      if (want[0]) accum(0, bcast_row(g, a.value().rows()));
      break;
    case Op::kSumCols:
      if (want[0]) accum(0, bcast_col(g, a.value().cols()));
      break;
    case Op::kBcastRow:
      if (want[0]) accum(0, sum_rows(g));
      break;
    case Op::kBcastCol:
      if (want[0]) accum(0, sum_cols(g));
      break;
    case Op::kBcastScalar:
      if (want[0]) accum(0, sum_all(g));
      break;
    case Op::kConcat0: {
      const int64_t n0 = a.value().rows();
      const int64_t n1 = n->inputs[1].value().rows();
      if (want[0]) accum(0, slice_rows(g, 0, n0));
      if (want[1]) accum(1, slice_rows(g, n0, n0 + n1));
      break;
    }
    case Op::kSliceRows:
      if (want[0]) accum(0, pad_rows(g, n->a0, a.value().rows()));
      break;
    case Op::kPadRows:
      if (want[0]) accum(0, slice_rows(g, n->a0, n->a0 + a.value().rows()));
      break;
    case Op::kReshape:
      if (want[0]) accum(0, reshape(g, a.shape()));
      break;
    case Op::kSubCol:
      if (want[0]) accum(0, g);
      if (want[1]) accum(1, neg(sum_cols(g)));
      break;
    case Op::kMulCol:
      if (want[0]) accum(0, mul_col(g, n->inputs[1]));
      if (want[1]) accum(1, sum_cols(mul(g, a)));
      break;
    case Op::kMulRow:
      if (want[0]) accum(0, mul_row(g, n->inputs[1]));
      if (want[1]) accum(1, sum_rows(mul(g, a)));
      break;
    case Op::kAddRow:
      if (want[0]) accum(0, g);
      if (want[1]) accum(1, sum_rows(g));
      break;
  }
}

// Forward-mode tangent of `n` given input tangents (undefined Var means
// a structural zero).
inline Var emit_tangent(const Var& n, const std::vector<Var>& dt) {
  auto present = [&](size_t i) { return i < dt.size() && dt[i].defined(); };
  const Var& a = n->inputs.size() > 0 ? n->inputs[0] : n;
  switch (n->op) {
    case Op::kLeaf:
      return Var();
    case Op::kMatMul: {
      const Var& b = n->inputs[1];
      Var t;
      if (present(0)) t = matmul(dt[0], b, n->ta, n->tb);
      if (present(1)) {
        Var t2 = matmul(a, dt[1], n->ta, n->tb);
        t = t.defined() ? add(t, t2) : t2;
      }
      return t;
    }
    case Op::kAdd:
      if (present(0) && present(1)) return add(dt[0], dt[1]);
      return present(0) ? dt[0] : (present(1) ? dt[1] : Var());
    case Op::kSub:
      if (present(0) && present(1)) return sub(dt[0], dt[1]);
      if (present(0)) return dt[0];
      return present(1) ? neg(dt[1]) : Var();
    case Op::kMul: {
      Var t;
      if (present(0)) t = mul(dt[0], n->inputs[1]);
      if (present(1)) {
        Var t2 = mul(a, dt[1]);
        t = t.defined() ? add(t, t2) : t2;
      }
      return t;
    }
    case Op::kScale:
      return present(0) ? scale(dt[0], n->c) : Var();
    case Op::kAddC:
      return present(0) ? dt[0] : Var();
    case Op::kExp:
      return present(0) ? mul(dt[0], n) : Var();
    case Op::kLog:
      return present(0) ? mul(dt[0], recip(a)) : Var();
    case Op::kSqrt:
      return present(0) ? scale(mul(dt[0], recip(n)), 0.5) : Var();
    case Op::kRecip:
      return present(0) ? neg(mul(dt[0], square(n))) : Var();
    case Op::kAbs:
      return present(0) ? mul(dt[0], sign(a)) : Var();
    case Op::kSign:
    case Op::kStepC:
      return Var();
    case Op::kMaxC:
      return present(0) ? mul(dt[0], stepc(a, n->c)) : Var();
    case Op::kElu:
      return present(0) ? mul(dt[0], elu_unit_grad(n)) : Var();
    case Op::kSumAll:
      return present(0) ? sum_all(dt[0]) : Var();
    case Op::kSumRows:
      return present(0) ? sum_rows(dt[0]) : Var();
    case Op::kSumCols:
      return present(0) ? sum_cols(dt[0]) : Var();
    case Op::kBcastRow:
      return present(0) ? bcast_row(dt[0], n->a0) : Var();
    case Op::kBcastCol:
      return present(0) ? bcast_col(dt[0], n->a0) : Var();
    case Op::kBcastScalar:
      return present(0) ? bcast_scalar(dt[0], n->value.shape()) : Var();
    case Op::kConcat0: {
      Var t0 = present(0) ? dt[0] : constant(Tensor::zeros(a.shape()));
      Var t1 = present(1) ? dt[1] : constant(Tensor::zeros(n->inputs[1].shape()));
      if (!present(0) && !present(1)) return Var();
      return concat0(t0, t1);
    }
    case Op::kSliceRows:
      return present(0) ? slice_rows(dt[0], n->a0, n->a1) : Var();
    case Op::kPadRows:
      return present(0) ? pad_rows(dt[0], n->a0, n->a1) : Var();
    case Op::kReshape:
      return present(0) ? reshape(dt[0], n->value.shape()) : Var();
    case Op::kSubCol: {
      if (present(0) && present(1)) return sub_col(dt[0], dt[1]);
      if (present(0)) return dt[0];
      return present(1) ? neg(bcast_col(dt[1], n->value.cols())) : Var();
    }
    case Op::kMulCol: {
      Var t;
      if (present(0)) t = mul_col(dt[0], n->inputs[1]);
      if (present(1)) {
        Var t2 = mul_col(a, dt[1]);
        t = t.defined() ? add(t, t2) : t2;
      }
      return t;
    }
    case Op::kMulRow: {
      Var t;
      if (present(0)) t = mul_row(dt[0], n->inputs[1]);
      if (present(1)) {
        Var t2 = mul_row(a, dt[1]);
        t = t.defined() ? add(t, t2) : t2;
      }
      return t;
    }
    case Op::kAddRow: {
      if (present(0) && present(1)) return add_row(dt[0], dt[1]);
      if (present(0)) return dt[0];
      return present(1) ? bcast_row(dt[1], n->value.rows()) : Var();
    }
  }
  return Var();
}

// Ancestors of `out` (inclusive), sorted by creation id (a topological
// order, since inputs are always created before their consumers).
inline std::vector<Var> ancestors_sorted(const Var& out) {
  std::vector<Var> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Var> stack{out};
  seen.insert(out.get());
  while (!stack.empty()) {
    Var v = stack.back();
    stack.pop_back();
    nodes.push_back(v);
    for (const Var& in : v->inputs)
      if (seen.insert(in.get()).second) stack.push_back(in);
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Var& x, const Var& y) { return x.id() < y.id(); });
  return nodes;
}

}  // namespace detail

// Reverse sweep: cotangents of `targets` given d(out) = ct. Targets not
// reachable from `out` get a zero tensor (documented: a parameter that
// does not participate has zero gradient, not an error). Adjoints are
// emitted as graph nodes, so the result is differentiable again.
inline std::vector<Var> backward(const Var& out, const Var& ct,
                                 std::span<const Var> targets) {
  if (!ct.value().same_shape(out.value()))
    throw shape_error("backward: cotangent shape " + shape_str(ct.shape()) +
                      " does not match output shape " + shape_str(out.shape()));
  ++diff_counters().sweeps;

  std::vector<Var> nodes = detail::ancestors_sorted(out);
  std::unordered_set<Node*> target_set;
  for (const Var& t : targets) target_set.insert(t.get());

  // reach[n]: a target lies in n's ancestry (including n itself).
  std::unordered_map<Node*, bool> reach;
  reach.reserve(nodes.size());
  for (const Var& v : nodes) {
    bool r = target_set.count(v.get()) > 0;
    if (!r)
      for (const Var& in : v->inputs)
        if (auto it = reach.find(in.get()); it != reach.end() && it->second) {
          r = true;
          break;
        }
    reach[v.get()] = r;
  }

  std::unordered_map<Node*, Var> adj;
  adj.reserve(64);
  adj[out.get()] = ct;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const Var& v = *it;
    if (!reach[v.get()]) continue;
    auto ait = adj.find(v.get());
    if (ait == adj.end()) continue;
    Var g = ait->second;
    std::vector<bool> want(v->inputs.size(), false);
    for (size_t i = 0; i < v->inputs.size(); ++i) {
      auto rit = reach.find(v->inputs[i].get());
      want[i] = rit != reach.end() && rit->second;
    }
    detail::emit_cotangents(v, g, want, [&](size_t i, Var contrib) {
      Node* in = v->inputs[i].get();
      auto prev = adj.find(in);
      if (prev == adj.end())
        adj.emplace(in, std::move(contrib));
      else
        prev->second = add(prev->second, contrib);
    });
  }

  std::vector<Var> result;
  result.reserve(targets.size());
  for (const Var& t : targets) {
    auto it = adj.find(t.get());
    result.push_back(it != adj.end() ? it->second
                                     : constant(Tensor::zeros(t.shape())));
  }
  return result;
}

// Forward sweep: tangent of `out` given tangents at seed leaves.
inline Var forward_tangent(const Var& out,
                           std::span<const std::pair<Var, Var>> seeds) {
  ++diff_counters().sweeps;
  std::vector<Var> nodes = detail::ancestors_sorted(out);
  std::unordered_map<Node*, Var> tan;
  for (const auto& [node, t] : seeds) {
    if (!t.value().same_shape(node.value()))
      throw shape_error("forward_tangent: tangent shape mismatch");
    tan[node.get()] = t;
  }
  for (const Var& v : nodes) {
    if (tan.count(v.get())) continue;
    std::vector<Var> dt(v->inputs.size());
    bool any = false;
    for (size_t i = 0; i < v->inputs.size(); ++i) {
      auto it = tan.find(v->inputs[i].get());
      if (it != tan.end()) {
        dt[i] = it->second;
        any = true;
      }
    }
    if (!any) continue;
    Var t = detail::emit_tangent(v, dt);
    if (t.defined()) tan[v.get()] = t;
  }
  auto it = tan.find(out.get());
  return it != tan.end() ? it->second : constant(Tensor::zeros(out.shape()));
}

// d(scalar)/d(target) for each target, as graph nodes.
inline std::vector<Var> grad(const Var& scalar_out, std::span<const Var> targets) {
  if (scalar_out.value().numel() != 1)
    throw shape_error("grad: output must be a scalar, got shape " +
                      shape_str(scalar_out.shape()));
  ++diff_counters().passes;
  return backward(scalar_out, constant(Tensor::full(scalar_out.shape(), 1.0)),
                  targets);
}

inline std::vector<Tensor> grad_tensors(const Var& scalar_out,
                                        std::span<const Var> targets) {
  std::vector<Var> g = grad(scalar_out, targets);
  std::vector<Tensor> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  return out;
}

// u^T J evaluated against an existing forward graph: cotangent of
// `wrt` for d(out) = u. Result stays connected to everything the
// backward rules read (weights included), so it can be differentiated
// again.
inline Var vjp_from(const Var& out, const Var& wrt, const Var& u) {
  ++diff_counters().passes;
  return backward(out, u, std::span<const Var>(&wrt, 1))[0];
}

enum class JvpMode { kDoubleVjp, kForward };

// J v via either the double-VJP construction (default: only reverse
// rules are needed, and they are emitted as differentiable ops) or a
// direct forward tangent sweep.
inline Var jvp_from(const Var& out, const Var& wrt, const Var& v,
                    JvpMode mode = JvpMode::kDoubleVjp) {
  if (!v.value().same_shape(wrt.value()))
    throw shape_error("jvp: tangent shape " + shape_str(v.shape()) +
                      " does not match input shape " + shape_str(wrt.shape()));
  ++diff_counters().passes;
  if (mode == JvpMode::kForward) {
    std::pair<Var, Var> seed{wrt, v};
    return forward_tangent(out, std::span<const std::pair<Var, Var>>(&seed, 1));
  }
  // <vjp(out, u0), v> is linear in u0; its gradient w.r.t. u0 is J v.
  Var u0 = leaf(Tensor::zeros(out.shape()), true);
  Var w = backward(out, u0, std::span<const Var>(&wrt, 1))[0];
  Var s = dot_all(w, v);
  return backward(s, constant(Tensor::scalar(1.0)),
                  std::span<const Var>(&u0, 1))[0];
}

using TensorFn = std::function<Var(const Var&)>;

// u^T J_f(x): row i of the result depends only on row i of u and x when
// f itself acts row-wise.
inline Tensor vjp(const TensorFn& f, const Tensor& x, const Tensor& u) {
  Var xv = leaf(x, true);
  Var y = f(xv);
  if (!u.same_shape(y.value()))
    throw shape_error("vjp: cotangent shape " + shape_str(u.shape()) +
                      " does not match f(x) shape " + shape_str(y.shape()));
  return vjp_from(y, xv, constant(u)).value();
}

// J_f(x) v.
inline Tensor jvp(const TensorFn& f, const Tensor& x, const Tensor& v,
                  JvpMode mode = JvpMode::kDoubleVjp) {
  Var xv = leaf(x, true);
  Var y = f(xv);
  return jvp_from(y, xv, constant(v), mode).value();
}

}  // namespace ganlab
