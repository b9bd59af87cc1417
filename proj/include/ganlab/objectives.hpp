#pragma once

#include <optional>
#include <string>
#include <utility>

#include "ganlab/autodiff.hpp"
#include "ganlab/graph.hpp"
#include "ganlab/network.hpp"
#include "ganlab/specnorm.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Variance floor inside every log/ratio: collapse to zero variance must
// not produce -inf.
inline constexpr double kVarFloor = 1e-6;

struct GaussianStats {
  Var mu;   // (p) per-dimension means
  Var var;  // (p) per-dimension population variances, floored at kVarFloor
};

// Population (1/N) column statistics of an embedding batch.
inline GaussianStats batch_gaussian_stats(const Var& z) {
  const Tensor& Z = z.value();
  if (Z.rank() != 2) throw shape_error("gaussian stats: rank-2 batch required");
  if (Z.rows() < 2)
    throw error("gaussian stats: batch of " + std::to_string(Z.rows()) +
                " is too small (need >= 2)");
  GaussianStats s;
  s.mu = mean_rows(z);
  s.var = maxc(mean_rows(square(sub(z, bcast_row(s.mu, Z.rows())))), kVarFloor);
  return s;
}

namespace detail {
inline void require_same_width(const Var& a, const Var& b, const char* what) {
  if (a.value().rank() != 2 || b.value().rank() != 2 ||
      a.value().cols() != b.value().cols())
    throw shape_error(std::string(what) + ": embedding widths differ (" +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()) + ")");
}
}  // namespace detail

// sum_d [ log var_joint_d - 1/2 log var_P_d - 1/2 log var_Q_d ], with the
// joint variance taken over the actually-concatenated batches (the
// single-Gaussian fit to the pooled samples). Zero when the two batches
// share per-dimension means and variances; nonnegative up to fp noise.
inline Var jsd_gaussian(const Var& z_real, const Var& z_fake) {
  detail::require_same_width(z_real, z_fake, "jsd_gaussian");
  GaussianStats real = batch_gaussian_stats(z_real);
  GaussianStats fake = batch_gaussian_stats(z_fake);
  GaussianStats joint = batch_gaussian_stats(concat0(z_real, z_fake));
  Var logs = sub(log(joint.var),
                 scale(add(log(real.var), log(fake.var)), 0.5));
  return sum_all(logs);
}

// Diagonal Bhattacharyya distance:
// 1/8 sum (mu_P - mu_Q)^2 / s2 + 1/2 sum [log s2 - 1/2 log vP - 1/2 log vQ],
// s2 = (vP + vQ) / 2.
inline Var bhattacharyya(const Var& z_real, const Var& z_fake) {
  detail::require_same_width(z_real, z_fake, "bhattacharyya");
  GaussianStats real = batch_gaussian_stats(z_real);
  GaussianStats fake = batch_gaussian_stats(z_fake);
  Var s2 = scale(add(real.var, fake.var), 0.5);
  Var dmu = sub(real.mu, fake.mu);
  Var mean_term = scale(sum_all(mul(square(dmu), recip(s2))), 0.125);
  Var cov_term = scale(
      sum_all(sub(log(s2), scale(add(log(real.var), log(fake.var)), 0.5))), 0.5);
  return add(mean_term, cov_term);
}

// Mean cosine similarity between each embedding and the mean of its K
// retrieved neighbors: (1/NK) sum_i sum_j <nb_ij, z_i>. Neighbor values
// are memory-bank constants; no gradient flows into them.
inline Var cluster_term(const Var& z, const Tensor& neighbors) {
  const Tensor& Z = z.value();
  if (neighbors.rank() != 3)
    throw shape_error("cluster term: neighbors must have shape (N, K, p)");
  const int64_t n = neighbors.dim(0), k = neighbors.dim(1), p = neighbors.dim(2);
  if (k == 0) throw error("cluster term: K = 0 (memory bank not warm)");
  if (Z.rank() != 2 || Z.rows() != n || Z.cols() != p)
    throw shape_error("cluster term: embeddings " + shape_str(Z.shape()) +
                      " do not match neighbors " + shape_str(neighbors.shape()));
  Tensor nb_sum = Tensor::zeros({n, p});
  double* po = nb_sum.mutable_data();
  const double* pn = neighbors.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t c = 0; c < p; ++c) po[i * p + c] += pn[(i * k + j) * p + c];
  const double norm = 1.0 / static_cast<double>(n * k);
  return scale(dot_all(z, constant(nb_sum)), norm);
}

// (real_term, fake_term). `fake_literal_n` switches the fake term to the
// 1/N normalization (equivalent to multiplying the 1/NK form by K).
inline std::pair<Var, Var> cluster_terms(const Var& z, const Var& z_fake,
                                         const Tensor& neighbors_real,
                                         const Tensor& neighbors_fake,
                                         bool fake_literal_n = false) {
  Var real_term = cluster_term(z, neighbors_real);
  Var fake_term = cluster_term(z_fake, neighbors_fake);
  if (fake_literal_n)
    fake_term = scale(fake_term, static_cast<double>(neighbors_fake.dim(1)));
  return {real_term, fake_term};
}

// mean_i max(||z_tilde_i|| - 1, 0).
inline Var hinge_norm(const Var& z_tilde) {
  return mean_all(maxc(addc(row_l2_norms(z_tilde), -1.0), 0.0));
}

enum class Distance : uint8_t { kJsd, kBhattacharyya, kHingeBaseline };

inline Distance parse_distance(const std::string& s) {
  if (s == "jsd") return Distance::kJsd;
  if (s == "bhattacharyya") return Distance::kBhattacharyya;
  if (s == "hinge-baseline") return Distance::kHingeBaseline;
  throw config_error("unknown distance '" + s +
                     "' (expected jsd | bhattacharyya | hinge-baseline)");
}

inline std::string distance_name(Distance d) {
  switch (d) {
    case Distance::kJsd: return "jsd";
    case Distance::kBhattacharyya: return "bhattacharyya";
    case Distance::kHingeBaseline: return "hinge-baseline";
  }
  return "?";
}

struct ObjectiveConfig {
  Distance distance = Distance::kJsd;
  double lambda_c = 3.0;
  double lambda_s = 5.0;
  double lambda_h = 4.0;
  double lip_target = 1.0;
  bool smooth_one_sided = false;
  bool cluster_fake_literal_n = false;
};

struct LossBreakdown {
  Var total;
  double gaussian = 0;
  double cluster_real = 0;
  double cluster_fake = 0;
  double hinge_norm = 0;
  double smooth = 0;
  double total_value = 0;
};

struct ClusterInputs {
  Tensor neighbors_real;  // (N, K, p)
  Tensor neighbors_fake;  // (N, K, p)
};

// Discriminator total, to be minimized:
//   -d(z, z^g) - lc*real + lc*fake + ls*smooth + lh*hinge(z_tilde both).
// Generated embeddings enter as values of the current tape; the caller
// is responsible for having built them with G's outputs fixed.
inline LossBreakdown discriminator_loss(
    const DiscriminatorOutput& real, const DiscriminatorOutput& fake,
    const std::optional<ClusterInputs>& cluster,
    const std::optional<SpectralEstimate>& spectral, const ObjectiveConfig& cfg) {
  if (cfg.distance == Distance::kHingeBaseline)
    throw config_error("discriminator_loss: use hinge_gan_losses for the baseline");
  LossBreakdown out;
  Var d = cfg.distance == Distance::kJsd ? jsd_gaussian(real.z, fake.z)
                                         : bhattacharyya(real.z, fake.z);
  out.gaussian = d.value().item();
  Var total = neg(d);
  if (cfg.lambda_c > 0 && cluster.has_value()) {
    auto [rt, ft] = cluster_terms(real.z, fake.z, cluster->neighbors_real,
                                  cluster->neighbors_fake,
                                  cfg.cluster_fake_literal_n);
    out.cluster_real = rt.value().item();
    out.cluster_fake = ft.value().item();
    total = add(total, scale(sub(ft, rt), cfg.lambda_c));
  }
  if (cfg.lambda_s > 0 && spectral.has_value()) {
    Var sp = smoothness_penalty(*spectral, cfg.lip_target, cfg.smooth_one_sided);
    out.smooth = sp.value().item();
    total = add(total, scale(sp, cfg.lambda_s));
  }
  if (cfg.lambda_h > 0) {
    Var h = hinge_norm(concat0(real.z_tilde, fake.z_tilde));
    out.hinge_norm = h.value().item();
    total = add(total, scale(h, cfg.lambda_h));
  }
  out.total = total;
  out.total_value = total.value().item();
  return out;
}

// Generator total, to be minimized: +d(z, z^g) - lc*fake_term.
inline LossBreakdown generator_loss(const DiscriminatorOutput& real,
                                    const DiscriminatorOutput& fake,
                                    const std::optional<Tensor>& neighbors_fake,
                                    const ObjectiveConfig& cfg) {
  if (cfg.distance == Distance::kHingeBaseline)
    throw config_error("generator_loss: use hinge_gan_losses for the baseline");
  LossBreakdown out;
  Var d = cfg.distance == Distance::kJsd ? jsd_gaussian(real.z, fake.z)
                                         : bhattacharyya(real.z, fake.z);
  out.gaussian = d.value().item();
  Var total = d;
  if (cfg.lambda_c > 0 && neighbors_fake.has_value()) {
    Var ft = cluster_term(fake.z, *neighbors_fake);
    if (cfg.cluster_fake_literal_n)
      ft = scale(ft, static_cast<double>(neighbors_fake->dim(1)));
    out.cluster_fake = ft.value().item();
    total = sub(total, scale(ft, cfg.lambda_c));
  }
  out.total = total;
  out.total_value = total.value().item();
  return out;
}

// Standard hinge GAN losses over scalar scores, in minimization form:
//   loss_D = mean max(0, 1 - D(x)) + mean max(0, 1 + D(x_hat))
//   loss_G = -mean D(x_hat)
inline std::pair<Var, Var> hinge_gan_losses(const Var& scores_real,
                                            const Var& scores_fake) {
  Var lr = mean_all(maxc(addc(neg(scores_real), 1.0), 0.0));
  Var lf = mean_all(maxc(addc(scores_fake, 1.0), 0.0));
  Var loss_d = add(lr, lf);
  Var loss_g = neg(mean_all(scores_fake));
  return {loss_d, loss_g};
}

}  // namespace ganlab
