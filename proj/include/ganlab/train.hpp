#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ganlab/adamw.hpp"
#include "ganlab/autodiff.hpp"
#include "ganlab/bank.hpp"
#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/network.hpp"
#include "ganlab/objectives.hpp"
#include "ganlab/specnorm.hpp"
#include "ganlab/spirals.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

inline constexpr const char* kMetricsHeader =
    "step,loss_d_total,loss_g_total,gaussian,cluster_real,cluster_fake,"
    "hinge_norm,sigma_hat_mean,sigma_hat_max,bank_fill";

struct StepMetrics {
  double loss_d = 0, loss_g = 0;
  double gaussian = 0, cluster_real = 0, cluster_fake = 0, hinge_norm = 0;
  double sigma_mean = 0, sigma_max = 0;
  int64_t bank_fill = 0;
};

namespace detail {

// Batch of row indices without replacement (partial Fisher-Yates).
inline std::vector<int64_t> sample_batch(uint64_t stream, int64_t n,
                                         int64_t batch) {
  Rng rng(stream);
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < batch; ++i) {
    const int64_t j = i + rng.next_below(n - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(batch));
  return idx;
}

inline Tensor gather_rows(const Tensor& src, const std::vector<int64_t>& idx) {
  const int64_t m = src.cols();
  Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), m});
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t j = 0; j < m; ++j)
      out.at(static_cast<int64_t>(i), j) = src.at(idx[i], j);
  return out;
}

inline void check_term(double v, const char* term, int64_t step) {
  if (!std::isfinite(v))
    throw numeric_error("non-finite loss term '" + std::string(term) +
                        "' at step " + std::to_string(step));
}

struct EmaViews {
  Tensor keys;    // z_b from the momentum discriminator
  Tensor values;  // z (embedding head) — empty tensor for scalar heads
};

inline EmaViews ema_discriminator_views(const TrainState& st, const Tensor& x) {
  DiscriminatorOutput out = discriminator_forward(st.d_ema, x);
  EmaViews v;
  v.keys = out.z_b.value();
  if (st.d_ema.arch.head == Head::kEmbedding) v.values = out.z.value();
  return v;
}

}  // namespace detail

// One alternating update: n_dis discriminator steps, one generator step,
// EMA refresh, then a memory-bank push of the last real batch through
// the momentum discriminator. Cluster terms are skipped until the bank
// can answer K-NN queries for every sample.
inline StepMetrics train_step(TrainState& st, const LabeledPoints& data) {
  const TrainConfig& cfg = st.config;
  const uint64_t seed = static_cast<uint64_t>(cfg.seed);
  const int64_t step = st.step + 1;
  const bool baseline = cfg.distance == "hinge-baseline";
  const ObjectiveConfig obj = cfg.objective();
  const Arch darch = cfg.d_arch();
  const Arch garch = cfg.g_arch();
  StepMetrics met;

  std::vector<int64_t> last_real_idx;
  for (int64_t sub = 0; sub < cfg.n_dis; ++sub) {
    last_real_idx = detail::sample_batch(
        rng_stream(seed, "batch_d", static_cast<uint64_t>(step),
                   static_cast<uint64_t>(sub)),
        cfg.n_train, cfg.batch_size);
    Tensor real = detail::gather_rows(data.points, last_real_idx);
    Rng prior_rng(rng_stream(seed, "prior_d", static_cast<uint64_t>(step),
                             static_cast<uint64_t>(sub)));
    Tensor prior = prior_rng.normal_tensor({cfg.batch_size, cfg.prior_dim});
    Tensor fake = generator_forward(st.g, prior);

    ParamVars dv = ParamVars::from(st.d, true);
    Var x_leaf = leaf(real, true);
    DiscriminatorOutput out_r = discriminator_forward(darch, dv, x_leaf);
    DiscriminatorOutput out_f = discriminator_forward(darch, dv, constant(fake));

    SpectralEstimate est = spectral_norm_estimate_from(
        out_r.z_tilde, x_leaf, cfg.power_iter_steps,
        rng_stream(seed, "spec", static_cast<uint64_t>(step),
                   static_cast<uint64_t>(sub)),
        cfg.jvp());
    double smax = 0, smean = 0;
    for (int64_t i = 0; i < est.sigma_values.numel(); ++i) {
      smean += est.sigma_values.at(i);
      smax = std::max(smax, est.sigma_values.at(i));
    }
    met.sigma_mean = smean / static_cast<double>(est.sigma_values.numel());
    met.sigma_max = smax;

    Var total;
    if (baseline) {
      auto [loss_d, loss_g_unused] =
          hinge_gan_losses(reshape(out_r.z_tilde, {cfg.batch_size}),
                           reshape(out_f.z_tilde, {cfg.batch_size}));
      (void)loss_g_unused;
      total = loss_d;
      if (cfg.lambda_s > 0)
        total = add(total, scale(smoothness_penalty(est, cfg.lip_target,
                                                    cfg.smooth_one_sided),
                                 cfg.lambda_s));
      if (cfg.lambda_h > 0) {
        Var h = hinge_norm(concat0(out_r.z_tilde, out_f.z_tilde));
        met.hinge_norm = h.value().item();
        total = add(total, scale(h, cfg.lambda_h));
      }
      met.loss_d = total.value().item();
      detail::check_term(met.loss_d, "hinge_d_total", step);
    } else {
      std::optional<ClusterInputs> cluster;
      if (cfg.lambda_c > 0) {
        detail::EmaViews qr = detail::ema_discriminator_views(st, real);
        detail::EmaViews qf = detail::ema_discriminator_views(st, fake);
        auto nb_real = st.bank.knn(qr.keys, last_real_idx, cfg.neighbors_k);
        std::vector<int64_t> no_ids(static_cast<size_t>(cfg.batch_size),
                                    kNoSourceId);
        auto nb_fake = st.bank.knn(qf.keys, no_ids, cfg.neighbors_k);
        if (nb_real && nb_fake)
          cluster = ClusterInputs{std::move(*nb_real), std::move(*nb_fake)};
      }
      LossBreakdown lb = discriminator_loss(out_r, out_f, cluster,
                                            cfg.lambda_s > 0
                                                ? std::optional<SpectralEstimate>(est)
                                                : std::nullopt,
                                            obj);
      met.loss_d = lb.total_value;
      met.gaussian = lb.gaussian;
      met.cluster_real = lb.cluster_real;
      met.cluster_fake = lb.cluster_fake;
      met.hinge_norm = lb.hinge_norm;
      detail::check_term(lb.gaussian, "gaussian", step);
      detail::check_term(lb.cluster_real, "cluster_real", step);
      detail::check_term(lb.cluster_fake, "cluster_fake", step);
      detail::check_term(lb.hinge_norm, "hinge_norm", step);
      detail::check_term(lb.smooth, "smoothness", step);
      detail::check_term(lb.total_value, "d_total", step);
      total = lb.total;
    }
    detail::check_term(met.sigma_mean, "sigma_hat", step);

    std::vector<Var> targets = dv.all();
    std::vector<Var> gv = grad(total, targets);
    std::vector<Tensor> grads;
    grads.reserve(gv.size());
    for (const Var& g : gv) grads.push_back(g.value());
    AdamWConfig oc{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay_d};
    adamw_step(st.d, grads, st.opt_d, oc);
  }

  // Generator update.
  {
    Rng prior_rng(rng_stream(seed, "prior_g", static_cast<uint64_t>(step)));
    Tensor prior = prior_rng.normal_tensor({cfg.batch_size, cfg.prior_dim});
    std::vector<int64_t> real_idx = detail::sample_batch(
        rng_stream(seed, "batch_g", static_cast<uint64_t>(step)), cfg.n_train,
        cfg.batch_size);
    Tensor real = detail::gather_rows(data.points, real_idx);

    ParamVars gvars = ParamVars::from(st.g, true);
    Var fake = generator_forward(garch, gvars, constant(prior));
    ParamVars dconst = ParamVars::from(st.d, false);
    DiscriminatorOutput out_f = discriminator_forward(darch, dconst, fake);

    Var total;
    if (baseline) {
      total = neg(mean_all(reshape(out_f.z_tilde, {cfg.batch_size})));
    } else {
      DiscriminatorOutput out_r =
          discriminator_forward(darch, dconst, constant(real));
      std::optional<Tensor> nb_fake;
      if (cfg.lambda_c > 0) {
        detail::EmaViews qf = detail::ema_discriminator_views(st, fake.value());
        std::vector<int64_t> no_ids(static_cast<size_t>(cfg.batch_size),
                                    kNoSourceId);
        nb_fake = st.bank.knn(qf.keys, no_ids, cfg.neighbors_k);
      }
      LossBreakdown lb = generator_loss(out_r, out_f, nb_fake, obj);
      total = lb.total;
    }
    met.loss_g = total.value().item();
    detail::check_term(met.loss_g, "g_total", step);

    std::vector<Var> targets = gvars.all();
    std::vector<Var> gv = grad(total, targets);
    std::vector<Tensor> grads;
    grads.reserve(gv.size());
    for (const Var& g : gv) grads.push_back(g.value());
    AdamWConfig oc{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay_g};
    adamw_step(st.g, grads, st.opt_g, oc);
  }

  st.d_ema = ema_update(st.d_ema, st.d, cfg.ema_decay);
  st.g_ema = ema_update(st.g_ema, st.g, cfg.ema_decay);

  if (!baseline) {
    Tensor real = detail::gather_rows(data.points, last_real_idx);
    detail::EmaViews views = detail::ema_discriminator_views(st, real);
    st.bank.push(views.keys, views.values, last_real_idx);
  }
  met.bank_fill = st.bank.size();
  st.step = step;
  return met;
}

inline void write_metrics_row(std::ostream& os, int64_t step,
                              const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld\n",
                static_cast<long long>(step), m.loss_d, m.loss_g, m.gaussian,
                m.cluster_real, m.cluster_fake, m.hinge_norm, m.sigma_mean,
                m.sigma_max, static_cast<long long>(m.bank_fill));
  os << buf;
}

struct TrainCallbacks {
  std::function<void(int64_t, const StepMetrics&)> on_log;
};

// Runs (or resumes) a training loop to config.total_steps, logging every
// log_interval steps and writing checkpoints into out_dir.
inline TrainState train_run(TrainState st, std::ostream& metrics,
                            const std::string& out_dir,
                            const TrainCallbacks& callbacks = {}) {
  const TrainConfig& cfg = st.config;
  if (cfg.batch_size > cfg.n_train)
    throw config_error("batch_size exceeds n_train");
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  LabeledPoints data =
      sample_spirals(cfg.n_train, cfg.noise_sd, static_cast<uint64_t>(cfg.data_seed));
  if (st.step == 0) metrics << kMetricsHeader << "\n";
  while (st.step < cfg.total_steps) {
    StepMetrics m = train_step(st, data);
    if (st.step % cfg.log_interval == 0) {
      write_metrics_row(metrics, st.step, m);
      if (callbacks.on_log) callbacks.on_log(st.step, m);
    }
    if (cfg.checkpoint_interval > 0 && st.step % cfg.checkpoint_interval == 0 &&
        !out_dir.empty() && st.step < cfg.total_steps)
      save_checkpoint(st, out_dir + "/checkpoint_step" + std::to_string(st.step) +
                              ".bin");
  }
  if (!out_dir.empty()) save_checkpoint(st, out_dir + "/checkpoint.bin");
  return st;
}

inline TrainState train_run_to_file(TrainState st, const std::string& out_dir,
                                    const TrainCallbacks& callbacks = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const bool fresh = st.step == 0;
  std::ofstream metrics(out_dir + "/metrics.csv",
                        fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw error("cannot open metrics.csv in '" + out_dir + "'");
  return train_run(std::move(st), metrics, out_dir, callbacks);
}

}  // namespace ganlab
