#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/kmeans.hpp"
#include "ganlab/metrics.hpp"
#include "ganlab/network.hpp"
#include "ganlab/probe.hpp"
#include "ganlab/specnorm.hpp"
#include "ganlab/spirals.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

inline constexpr const char* kEvalHeader =
    "split,kmeans_acc_mean,kmeans_acc_sd,nmi,purity,probe_acc,arm0_share,"
    "manifold_rate";

struct EvalResult {
  std::string split;
  double kmeans_acc_mean = 0;
  double kmeans_acc_sd = 0;
  double nmi = 0;
  double purity = 0;
  double probe_acc = 0;
  double arm0_share = 0;
  double manifold_rate = 0;
};

inline LabeledPoints dataset_split(const TrainConfig& cfg,
                                   const std::string& split) {
  const uint64_t seed = static_cast<uint64_t>(cfg.data_seed);
  if (split == "train") return sample_spirals(cfg.n_train, cfg.noise_sd, seed);
  if (split == "val")
    return sample_spirals(cfg.n_val, cfg.noise_sd, rng_stream(seed, "val"));
  throw config_error("unknown split '" + split + "' (expected train | val)");
}

// Backbone features z_b from the momentum discriminator, extracted in
// chunks to bound the tape size.
inline Tensor backbone_features(const NetworkParams& d_ema, const Tensor& points) {
  const int64_t n = points.rows();
  const int64_t chunk = 512;
  Tensor out;
  std::vector<double> buf;
  int64_t width = 0;
  for (int64_t begin = 0; begin < n; begin += chunk) {
    const int64_t end = std::min(n, begin + chunk);
    Tensor part = Tensor::zeros({end - begin, points.cols()});
    for (int64_t i = begin; i < end; ++i)
      for (int64_t j = 0; j < points.cols(); ++j)
        part.at(i - begin, j) = points.at(i, j);
    Tensor zb = discriminator_forward(d_ema, part).z_b.value();
    width = zb.cols();
    buf.insert(buf.end(), zb.data(), zb.data() + zb.numel());
  }
  return Tensor::from_vector({n, width}, std::move(buf));
}

inline Tensor normalize_rows_copy(const Tensor& t) {
  Tensor out = t.clone();
  double* p = out.mutable_data();
  const int64_t n = out.rows(), m = out.cols();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < m; ++j) s += p[i * m + j] * p[i * m + j];
    s = std::sqrt(s);
    if (!(s > 1e-12))
      throw numeric_error("feature row " + std::to_string(i) +
                          " has degenerate norm");
    for (int64_t j = 0; j < m; ++j) p[i * m + j] /= s;
  }
  return out;
}

// Mean per-sample spectral-norm estimate of the momentum discriminator's
// x -> z_tilde map over a point set.
inline double mean_sigma(const NetworkParams& d_ema, const Tensor& points,
                         int64_t steps, uint64_t seed,
                         JvpMode mode = JvpMode::kDoubleVjp) {
  const int64_t n = points.rows();
  const int64_t chunk = 256;
  double sum = 0;
  for (int64_t begin = 0; begin < n; begin += chunk) {
    const int64_t end = std::min(n, begin + chunk);
    Tensor part = Tensor::zeros({end - begin, points.cols()});
    for (int64_t i = begin; i < end; ++i)
      for (int64_t j = 0; j < points.cols(); ++j)
        part.at(i - begin, j) = points.at(i, j);
    ParamVars pv = ParamVars::from(d_ema, true);
    Var x_leaf = leaf(part, true);
    DiscriminatorOutput out = discriminator_forward(d_ema.arch, pv, x_leaf);
    SpectralEstimate est = spectral_norm_estimate_from(
        out.z_tilde, x_leaf, steps, rng_stream(seed, "eval_sigma", begin), mode);
    for (int64_t i = 0; i < est.sigma_values.numel(); ++i)
      sum += est.sigma_values.at(i);
  }
  return sum / static_cast<double>(n);
}

// Representation metrics on a split plus generation diagnostics:
// K-means protocol accuracy / NMI / purity over z_b, a linear probe
// trained on the train split, the share of generated samples whose
// nearest real neighbor lies on arm 0, and the fraction of generated
// points within 3 * noise_sd of a noiseless spiral curve.
inline EvalResult evaluate_split(const TrainState& st, const std::string& split) {
  const TrainConfig& cfg = st.config;
  EvalResult res;
  res.split = split;
  LabeledPoints eval_data = dataset_split(cfg, split);
  Tensor feats = backbone_features(st.d_ema, eval_data.points);

  KmeansProtocolResult km = kmeans_protocol(
      normalize_rows_copy(feats), eval_data.labels, /*k=*/2, cfg.kmeans_repeats,
      static_cast<uint64_t>(cfg.eval_seed), cfg.kmeans_max_iters);
  res.kmeans_acc_mean = km.mean_accuracy;
  res.kmeans_acc_sd = km.sd_accuracy;
  res.nmi = km.mean_nmi;
  res.purity = km.mean_purity;

  LabeledPoints train_data = dataset_split(cfg, "train");
  Tensor train_feats = split == "train"
                           ? feats
                           : backbone_features(st.d_ema, train_data.points);
  ProbeConfig pc;
  pc.c = cfg.probe_c;
  pc.epochs = cfg.probe_epochs;
  pc.seed = static_cast<uint64_t>(cfg.eval_seed);
  res.probe_acc =
      linear_probe(train_feats, train_data.labels, feats, eval_data.labels, pc);

  // Generation diagnostics.
  const int64_t n_gen = 2000;
  Tensor prior = sample_prior(n_gen, cfg.prior_dim,
                              rng_stream(static_cast<uint64_t>(cfg.eval_seed),
                                         "gen_prior"));
  Tensor gen = generator_forward(st.g_ema, prior);
  const Tensor& real = eval_data.points;
  int64_t arm0 = 0, near_curve = 0;
  const double tol = 3.0 * cfg.noise_sd;
  for (int64_t i = 0; i < n_gen; ++i) {
    const double gx = gen.at(i, 0), gy = gen.at(i, 1);
    int64_t best = 0;
    double bd = 1e300;
    for (int64_t r = 0; r < real.rows(); ++r) {
      const double dx = gx - real.at(r, 0), dy = gy - real.at(r, 1);
      const double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        best = r;
      }
    }
    if (eval_data.labels[static_cast<size_t>(best)] == 0) ++arm0;
    double ox, oy;
    eval_data.destandardize(gx, gy, ox, oy);
    if (spiral_curve_distance(eval_data.shape, ox, oy) <= tol) ++near_curve;
  }
  res.arm0_share = static_cast<double>(arm0) / static_cast<double>(n_gen);
  res.manifold_rate = static_cast<double>(near_curve) / static_cast<double>(n_gen);
  return res;
}

inline std::string eval_csv_row(const EvalResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                r.split.c_str(), r.kmeans_acc_mean, r.kmeans_acc_sd, r.nmi,
                r.purity, r.probe_acc, r.arm0_share, r.manifold_rate);
  return buf;
}

}  // namespace ganlab
