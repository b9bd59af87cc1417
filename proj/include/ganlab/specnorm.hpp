#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ganlab/autodiff.hpp"
#include "ganlab/graph.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Per-sample estimate of ||J_F(x_i)||_2 with the final singular-direction
// iterates. `sigma` stays differentiable with respect to everything F
// reads (its parameters); u and v are frozen iterates.
struct SpectralEstimate {
  Var sigma;            // (n)
  Tensor sigma_values;  // copy of sigma's value
  Tensor u;             // (n, p) unit rows
  Tensor v;             // (n, m) unit rows
  uint64_t diff_passes = 0;  // exactly 2S+1
};

namespace detail {

// Row-normalizes in place; returns false if any row norm is degenerate.
inline bool normalize_rows(Tensor& t) {
  const int64_t n = t.rows(), m = t.cols();
  double* p = t.mutable_data();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < m; ++j) s += p[i * m + j] * p[i * m + j];
    s = std::sqrt(s);
    if (!(s > 1e-150)) return false;
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < m; ++j) p[i * m + j] *= inv;
  }
  return true;
}

struct PowerIterResult {
  bool ok = false;
  Tensor u, v;
  Var w_final;  // u^T J as a taped row batch, produced by the final pass
};

inline PowerIterResult power_iterate(const Var& y, const Var& x_leaf,
                                     int64_t steps, uint64_t seed, JvpMode mode) {
  PowerIterResult r;
  Rng rng(seed);
  Tensor u = rng.normal_tensor(y.value().shape());
  Tensor v;
  for (int64_t s = 0; s < steps; ++s) {
    Tensor w = vjp_from(y, x_leaf, constant(u)).value();  // u J
    if (!normalize_rows(w)) return r;
    v = w;
    Tensor jv = jvp_from(y, x_leaf, constant(v), mode).value();  // J v
    if (!normalize_rows(jv)) return r;
    u = jv;
  }
  r.w_final = vjp_from(y, x_leaf, constant(u));  // taped: differentiable in F
  r.u = std::move(u);
  r.v = std::move(v);
  r.ok = true;
  return r;
}

}  // namespace detail

// Power iteration over the Jacobian of the map behind `y = F(x_leaf)`,
// alternating row-normalized VJP and JVP sweeps, with u drawn N(0,1).
// The returned sigma_i = u_i^T J_i v_i treats u and v as constants, so
// its gradient flows through J only. Costs exactly 2S+1 differentiation
// passes. A degenerate (zero) iterate triggers one resample of u, then a
// hard error.
inline SpectralEstimate spectral_norm_estimate_from(
    const Var& y, const Var& x_leaf, int64_t steps, uint64_t seed,
    JvpMode mode = JvpMode::kDoubleVjp) {
  if (steps < 1) throw config_error("spectral norm: need at least one iteration");
  if (y.value().rank() != 2 || x_leaf.value().rank() != 2)
    throw shape_error("spectral norm: batched rank-2 map required");
  const uint64_t passes_before = diff_counters().passes;
  detail::PowerIterResult pr =
      detail::power_iterate(y, x_leaf, steps, rng_stream(seed, "power_u", 0), mode);
  if (!pr.ok) {
    diff_counters().passes = passes_before;
    pr = detail::power_iterate(y, x_leaf, steps, rng_stream(seed, "power_u", 1),
                               mode);
    if (!pr.ok)
      throw numeric_error(
          "spectral norm: zero vector during power iteration (degenerate "
          "Jacobian) after one resample");
  }
  SpectralEstimate est;
  est.sigma = sum_cols(mul(pr.w_final, constant(pr.v)));
  est.sigma_values = est.sigma.value();
  est.u = std::move(pr.u);
  est.v = std::move(pr.v);
  est.diff_passes = diff_counters().passes - passes_before;
  if (est.diff_passes != static_cast<uint64_t>(2 * steps + 1))
    throw error("spectral norm: differentiation pass budget violated (" +
                std::to_string(est.diff_passes) + " != " +
                std::to_string(2 * steps + 1) + ")");
  return est;
}

inline SpectralEstimate spectral_norm_estimate(const TensorFn& func,
                                               const Tensor& x, int64_t steps,
                                               uint64_t seed,
                                               JvpMode mode = JvpMode::kDoubleVjp) {
  Var x_leaf = leaf(x, true);
  Var y = func(x_leaf);
  return spectral_norm_estimate_from(y, x_leaf, steps, seed, mode);
}

// mean_i |sigma_i - lip| (or the one-sided hinge variant).
inline Var smoothness_penalty(const SpectralEstimate& est, double lip_target,
                              bool one_sided = false) {
  if (!(lip_target > 0))
    throw config_error("smoothness penalty: lip target must be positive");
  Var dev = addc(est.sigma, -lip_target);
  return mean_all(one_sided ? maxc(dev, 0.0) : abs(dev));
}

}  // namespace ganlab
