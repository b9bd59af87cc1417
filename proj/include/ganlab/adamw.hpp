#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ganlab/network.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;
};

// Decoupled update:
//   m,v <- moment EMAs; bias-corrected;
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
// The decay displacement is exactly -lr*wd*p regardless of gradient
// history. Aborts on any non-finite gradient, naming the parameter.
inline void adamw_step(NetworkParams& params, const std::vector<Tensor>& grads,
                       AdamWState& state, const AdamWConfig& cfg) {
  if (grads.size() != params.params.size())
    throw error("adamw: gradient count does not match parameter count");
  if (state.m.empty()) {
    for (const auto& [name, t] : params.params) {
      state.m.push_back(Tensor::zeros(t.shape()));
      state.v.push_back(Tensor::zeros(t.shape()));
    }
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params.params[i].second))
      throw shape_error("adamw: gradient shape mismatch for '" +
                        params.params[i].first + "'");
    if (!grads[i].all_finite())
      throw numeric_error("adamw: non-finite gradient for parameter '" +
                          params.params[i].first + "'");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = params.params[i].second;
    Tensor np = Tensor::zeros(p.shape());
    double* out = np.mutable_data();
    double* m = state.m[i].mutable_data();
    double* v = state.v[i].mutable_data();
    const double* g = grads[i].data();
    const double* pp = p.data();
    for (int64_t k = 0; k < p.numel(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      out[k] = pp[k] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps)) -
               cfg.lr * cfg.weight_decay * pp[k];
    }
    p = np;
  }
}

}  // namespace ganlab
