#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ganlab/autodiff.hpp"
#include "ganlab/graph.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

enum class Head : uint8_t {
  kEmbedding,  // final linear layer + row L2 normalization (z, z_tilde)
  kScalar,     // width-1 unnormalized score
  kPlain,      // generator: final linear layer only
};

// MLP layout: input -> hidden x L (linear + group norm + ELU, no norm
// before the first hidden activation) -> output linear.
struct Arch {
  int64_t input_dim = 2;
  std::vector<int64_t> hidden = {256, 256, 256, 256};
  int64_t output_dim = 32;
  int64_t group_size = 16;
  std::string activation = "elu";
  Head head = Head::kEmbedding;

  void validate() const {
    if (input_dim < 1 || output_dim < 1)
      throw config_error("arch: dimensions must be positive");
    if (hidden.empty()) throw config_error("arch: at least one hidden layer");
    for (size_t i = 0; i < hidden.size(); ++i) {
      if (hidden[i] < 1) throw config_error("arch: hidden width must be positive");
      if (i > 0 && hidden[i] % group_size != 0)
        throw config_error("arch: hidden width " + std::to_string(hidden[i]) +
                           " not divisible by group size " +
                           std::to_string(group_size));
    }
    if (activation != "elu")
      throw config_error("arch: unsupported activation '" + activation + "'");
  }
};

// Ordered (name, tensor) parameter list plus its architecture.
struct NetworkParams {
  Arch arch;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : params)
      if (n == name) return t;
    throw error("no parameter named '" + name + "'");
  }
};

// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases, unit
// group-norm gains. Deterministic per seed.
inline NetworkParams init_params(const Arch& arch, uint64_t seed) {
  arch.validate();
  NetworkParams net;
  net.arch = arch;
  auto add_linear = [&](const std::string& prefix, int64_t fan_in, int64_t fan_out,
                        uint64_t idx) {
    Rng rng(rng_stream(seed, "init", idx));
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    net.params.emplace_back(prefix + ".w",
                            rng.uniform_tensor({fan_in, fan_out}, -bound, bound));
    net.params.emplace_back(prefix + ".b", Tensor::zeros({fan_out}));
  };
  int64_t prev = arch.input_dim;
  for (size_t i = 0; i < arch.hidden.size(); ++i) {
    const std::string prefix = "h" + std::to_string(i);
    add_linear(prefix, prev, arch.hidden[i], i);
    if (i > 0) {
      net.params.emplace_back(prefix + ".gn_g", Tensor::full({arch.hidden[i]}, 1.0));
      net.params.emplace_back(prefix + ".gn_b", Tensor::zeros({arch.hidden[i]}));
    }
    prev = arch.hidden[i];
  }
  add_linear("out", prev, arch.output_dim, arch.hidden.size());
  return net;
}

// Parameter tensors lifted onto the tape once per step; lookups by name.
struct ParamVars {
  std::vector<std::pair<std::string, Var>> vars;

  static ParamVars from(const NetworkParams& net, bool requires_grad) {
    ParamVars pv;
    pv.vars.reserve(net.params.size());
    for (const auto& [name, t] : net.params)
      pv.vars.emplace_back(name, leaf(t, requires_grad));
    return pv;
  }

  const Var& get(const std::string& name) const {
    for (const auto& [n, v] : vars)
      if (n == name) return v;
    throw error("no parameter var named '" + name + "'");
  }

  std::vector<Var> all() const {
    std::vector<Var> out;
    out.reserve(vars.size());
    for (const auto& [n, v] : vars) out.push_back(v);
    return out;
  }
};

struct DiscriminatorOutput {
  Var z_tilde;  // unnormalized embedding
  Var z;        // row-normalized embedding (embedding head only)
  Var z_b;      // backbone representation: last hidden activation
};

namespace detail {

inline Var mlp_backbone(const Arch& arch, const ParamVars& pv, const Var& x) {
  if (x.value().rank() != 2 || x.value().cols() != arch.input_dim)
    throw shape_error("network input shape " + shape_str(x.shape()) +
                      " does not match input dim " + std::to_string(arch.input_dim));
  Var h = x;
  for (size_t i = 0; i < arch.hidden.size(); ++i) {
    const std::string prefix = "h" + std::to_string(i);
    Var a = add_bias_row(matmul(h, pv.get(prefix + ".w")), pv.get(prefix + ".b"));
    if (i > 0)
      a = group_norm(a, arch.group_size, pv.get(prefix + ".gn_g"),
                     pv.get(prefix + ".gn_b"));
    h = elu(a);
  }
  return h;
}

}  // namespace detail

// x -> (z_tilde, z, z_b). Rows of z live on the unit sphere; a
// z_tilde row with norm <= 1e-12 raises a degenerate-embedding error.
inline DiscriminatorOutput discriminator_forward(const Arch& arch,
                                                 const ParamVars& pv, const Var& x) {
  DiscriminatorOutput out;
  out.z_b = detail::mlp_backbone(arch, pv, x);
  out.z_tilde = add_bias_row(matmul(out.z_b, pv.get("out.w")), pv.get("out.b"));
  if (arch.head == Head::kEmbedding) out.z = l2_normalize_rows(out.z_tilde);
  return out;
}

inline DiscriminatorOutput discriminator_forward(const NetworkParams& net,
                                                 const Tensor& x,
                                                 bool requires_grad = false) {
  ParamVars pv = ParamVars::from(net, requires_grad);
  return discriminator_forward(net.arch, pv, constant(x));
}

inline Var generator_forward(const Arch& arch, const ParamVars& pv, const Var& v) {
  Var h = detail::mlp_backbone(arch, pv, v);
  return add_bias_row(matmul(h, pv.get("out.w")), pv.get("out.b"));
}

inline Tensor generator_forward(const NetworkParams& net, const Tensor& v) {
  ParamVars pv = ParamVars::from(net, false);
  return generator_forward(net.arch, pv, constant(v)).value();
}

// shadow' = decay * shadow + (1 - decay) * live, elementwise.
inline NetworkParams ema_update(const NetworkParams& shadow,
                                const NetworkParams& live, double decay) {
  if (!(decay >= 0.0 && decay < 1.0))
    throw config_error("ema decay must lie in [0, 1), got " + std::to_string(decay));
  if (shadow.params.size() != live.params.size())
    throw error("ema: parameter sets differ in size");
  NetworkParams out;
  out.arch = shadow.arch;
  out.params.reserve(shadow.params.size());
  for (size_t i = 0; i < shadow.params.size(); ++i) {
    const auto& [sn, st] = shadow.params[i];
    const auto& [ln, lt] = live.params[i];
    if (sn != ln || !st.same_shape(lt))
      throw error("ema: parameter mismatch at '" + sn + "'");
    Tensor t = Tensor::zeros(st.shape());
    double* po = t.mutable_data();
    const double* ps = st.data();
    const double* pl = lt.data();
    for (int64_t k = 0; k < t.numel(); ++k)
      po[k] = decay * ps[k] + (1.0 - decay) * pl[k];
    out.params.emplace_back(sn, std::move(t));
  }
  return out;
}

}  // namespace ganlab
