#include <cmath>
#include <vector>

#include "doctest.h"
#include "ganlab/network.hpp"
#include "ganlab/objectives.hpp"
#include "ganlab/rng.hpp"

using namespace ganlab;

namespace {

Var batch(const std::vector<double>& v, int64_t n, int64_t p) {
  return constant(Tensor::from_vector({n, p}, v));
}

// 1-d population with mean mu and population variance 1: {mu-1, mu+1}.
Var unit_var_pair(double mu) { return batch({mu - 1.0, mu + 1.0}, 2, 1); }

}  // namespace

TEST_CASE("batch statistics: means, floored variances, degenerate batches") {
  GaussianStats s = batch_gaussian_stats(batch({1, 0, -1, 0}, 2, 2));
  CHECK(s.mu.value().at(0) == 0.0);
  CHECK(s.mu.value().at(1) == 0.0);
  CHECK(s.var.value().at(0) == doctest::Approx(1.0));
  CHECK(s.var.value().at(1) == doctest::Approx(kVarFloor));

  GaussianStats c = batch_gaussian_stats(batch({2, 2, 2, 2}, 2, 2));
  CHECK(c.var.value().at(0) == doctest::Approx(kVarFloor));
  CHECK(c.var.value().at(1) == doctest::Approx(kVarFloor));

  CHECK_THROWS_AS(batch_gaussian_stats(batch({1, 2}, 1, 2)), error);
}

TEST_CASE("batch statistics match a two-pass reference on a 500x32 batch") {
  Rng rng(rng_stream(0, "stats_oracle"));
  const int64_t n = 500, p = 32;
  Tensor z = rng.normal_tensor({n, p});
  GaussianStats s = batch_gaussian_stats(constant(z));
  for (int64_t j = 0; j < p; ++j) {
    double mu = 0;
    for (int64_t i = 0; i < n; ++i) mu += z.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = z.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    CHECK(std::abs(s.mu.value().at(j) - mu) <=
          1e-12 * std::max(1.0, std::abs(mu)));
    CHECK(std::abs(s.var.value().at(j) - var) <= 1e-12 * var);
  }
}

TEST_CASE("jsd of identical batches is zero") {
  Rng rng(3);
  Tensor z = rng.normal_tensor({8, 4});
  CHECK(std::abs(jsd_gaussian(constant(z), constant(z)).value().item()) <= 1e-10);
}

TEST_CASE("jsd 1-d analytic case: mean gap 2, unit variances -> log 2") {
  // Pooled variance over equal batches: (vP+vQ)/2 + (muP-muQ)^2/4 = 2.
  Var zr = unit_var_pair(0.0);
  Var zf = unit_var_pair(2.0);
  CHECK(jsd_gaussian(zr, zf).value().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("jsd matches the analytic pooled-variance formula on random pairs") {
  Rng rng(rng_stream(1, "jsd_oracle"));
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 4 + rng.next_below(12);
    const int64_t p = 1 + rng.next_below(5);
    Tensor a = rng.normal_tensor({n, p});
    Tensor b = rng.normal_tensor({n, p});
    const double got = jsd_gaussian(constant(a), constant(b)).value().item();
    double want = 0;
    for (int64_t j = 0; j < p; ++j) {
      double ma = 0, mb = 0;
      for (int64_t i = 0; i < n; ++i) {
        ma += a.at(i, j);
        mb += b.at(i, j);
      }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0;
      for (int64_t i = 0; i < n; ++i) {
        va += (a.at(i, j) - ma) * (a.at(i, j) - ma);
        vb += (b.at(i, j) - mb) * (b.at(i, j) - mb);
      }
      va /= n;
      vb /= n;
      const double vj = (va + vb) / 2 + (ma - mb) * (ma - mb) / 4;
      want += std::log(std::max(vj, kVarFloor)) -
              0.5 * std::log(std::max(va, kVarFloor)) -
              0.5 * std::log(std::max(vb, kVarFloor));
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("jsd and bhattacharyya are nonnegative on random batch pairs") {
  // The joint variance of two equal-size batches is (vP+vQ)/2 + (dmu)^2/4,
  // which dominates sqrt(vP*vQ) by AM-GM. Unequal sizes weight the pool
  // and can dip below the geometric mean, so the JSD property is stated
  // for equal batches (as used throughout training). Bhattacharyya never
  // sees batch sizes, only per-batch statistics.
  Rng rng(rng_stream(2, "nonneg"));
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t n = 2 + rng.next_below(6);
    const int64_t m = 2 + rng.next_below(6);
    const int64_t p = 1 + rng.next_below(4);
    Tensor a = rng.normal_tensor({n, p});
    Tensor a2 = rng.normal_tensor({n, p});
    Tensor b = rng.normal_tensor({m, p});
    CHECK(jsd_gaussian(constant(a), constant(a2)).value().item() >= -1e-10);
    CHECK(bhattacharyya(constant(a), constant(b)).value().item() >= -1e-10);
  }
}

TEST_CASE("distances are invariant under identical coordinate permutations") {
  Rng rng(rng_stream(3, "perm"));
  Tensor a = rng.normal_tensor({6, 4});
  Tensor b = rng.normal_tensor({6, 4});
  const std::vector<int64_t> perm = {2, 0, 3, 1};
  Tensor ap = Tensor::uninit({6, 4});
  Tensor bp = Tensor::uninit({6, 4});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      ap.at(i, j) = a.at(i, perm[static_cast<size_t>(j)]);
      bp.at(i, j) = b.at(i, perm[static_cast<size_t>(j)]);
    }
  CHECK(jsd_gaussian(constant(ap), constant(bp)).value().item() ==
        doctest::Approx(jsd_gaussian(constant(a), constant(b)).value().item())
            .epsilon(1e-12));
  CHECK(bhattacharyya(constant(ap), constant(bp)).value().item() ==
        doctest::Approx(bhattacharyya(constant(a), constant(b)).value().item())
            .epsilon(1e-12));
}

TEST_CASE("bhattacharyya analytic cases") {
  Rng rng(4);
  Tensor z = rng.normal_tensor({10, 3});
  CHECK(std::abs(bhattacharyya(constant(z), constant(z)).value().item()) <= 1e-12);

  // 1-d, means 0 and 2, unit variances: 1/8 * 4 + 0 = 0.5.
  CHECK(bhattacharyya(unit_var_pair(0.0), unit_var_pair(2.0)).value().item() ==
        doctest::Approx(0.5).epsilon(1e-9));

  Tensor b = rng.normal_tensor({10, 3});
  CHECK(bhattacharyya(constant(z), constant(b)).value().item() ==
        doctest::Approx(bhattacharyya(constant(b), constant(z)).value().item())
            .epsilon(1e-12));

  CHECK_THROWS_AS(
      bhattacharyya(constant(rng.normal_tensor({4, 2})),
                    constant(rng.normal_tensor({4, 3}))),
      shape_error);
}

TEST_CASE("cluster term boundary values") {
  // K=1, every neighbor equal to its query embedding: mean cosine 1.
  Tensor z = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  Tensor nb_same = Tensor::from_vector({2, 1, 2}, {1, 0, 0, 1});
  CHECK(cluster_term(constant(z), nb_same).value().item() ==
        doctest::Approx(1.0));

  Tensor nb_orth = Tensor::from_vector({2, 1, 2}, {0, 1, 1, 0});
  CHECK(cluster_term(constant(z), nb_orth).value().item() ==
        doctest::Approx(0.0));
}

TEST_CASE("cluster terms match an explicit double sum on a hand case") {
  const double s2 = std::sqrt(0.5);
  // Queries at 0 and 90 degrees; neighbors at 45/0 and 45/90 degrees.
  Tensor z = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  Tensor nb = Tensor::from_vector({2, 2, 2}, {s2, s2, 1, 0, s2, s2, 0, 1});
  double want = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double* q = z.data() + i * 2;
      const double* v = nb.data() + (i * 2 + j) * 2;
      want += q[0] * v[0] + q[1] * v[1];
    }
  want /= 4.0;  // 1/(N K)
  CHECK(cluster_term(constant(z), nb).value().item() ==
        doctest::Approx(want).epsilon(1e-12));

  auto [rt, ft] = cluster_terms(constant(z), constant(z), nb, nb, false);
  CHECK(rt.value().item() == doctest::Approx(want));
  CHECK(ft.value().item() == doctest::Approx(want));
  auto [rt2, ft2] = cluster_terms(constant(z), constant(z), nb, nb, true);
  CHECK(rt2.value().item() == doctest::Approx(want));
  CHECK(ft2.value().item() == doctest::Approx(2.0 * want));  // literal 1/N form
}

TEST_CASE("cluster terms stay within [-1, 1] and reject bad neighbor shapes") {
  Rng rng(rng_stream(5, "cluster_bounds"));
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 1 + rng.next_below(5);
    const int64_t k = 1 + rng.next_below(4);
    const int64_t p = 2 + rng.next_below(4);
    Tensor z = rng.normal_tensor({n, p});
    Tensor nb = rng.normal_tensor({n, k, p});
    auto normalize = [](double* v, int64_t d) {
      double s = 0;
      for (int64_t j = 0; j < d; ++j) s += v[j] * v[j];
      s = std::sqrt(s);
      for (int64_t j = 0; j < d; ++j) v[j] /= s;
    };
    for (int64_t i = 0; i < n; ++i) normalize(z.mutable_data() + i * p, p);
    for (int64_t i = 0; i < n * k; ++i) normalize(nb.mutable_data() + i * p, p);
    const double t = cluster_term(constant(z), nb).value().item();
    CHECK(t >= -1.0 - 1e-12);
    CHECK(t <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS(cluster_term(constant(Tensor::zeros({2, 2})),
                               Tensor::zeros({2, 2})),
                  shape_error);
}

TEST_CASE("no gradient flows into memory-bank neighbor values") {
  // Neighbors enter as constants; the documented zero-gradient contract.
  Tensor nb = Tensor::from_vector({1, 1, 2}, {1, 0});
  Var z = leaf(Tensor::from_vector({1, 2}, {0, 1}), true);
  Var nb_leaf = constant(nb);
  Var term = cluster_term(z, nb);
  std::vector<Var> wrt = {z, nb_leaf};
  auto g = grad_tensors(term, wrt);
  CHECK(g[0].numel() == 2);
  for (int64_t i = 0; i < g[1].numel(); ++i) CHECK(g[1].at(i) == 0.0);
}

TEST_CASE("hinge norm values and dead zone") {
  // All rows inside the unit ball -> 0.
  Var in = batch({0.3, 0.4, 0.0, 0.5}, 2, 2);
  CHECK(hinge_norm(in).value().item() == 0.0);

  // Single sample with norm 2 -> 1.
  Var big = batch({2.0, 0.0}, 1, 2);
  CHECK(hinge_norm(big).value().item() == doctest::Approx(1.0));

  // Gradient vanishes strictly inside the ball.
  Var zt = leaf(Tensor::from_vector({2, 2}, {0.3, 0.4, -0.2, 0.1}), true);
  auto g = grad_tensors(hinge_norm(zt), std::span<const Var>(&zt, 1));
  for (int64_t i = 0; i < g[0].numel(); ++i) CHECK(g[0].at(i) == 0.0);
}

namespace {

struct LossFixture {
  Arch arch;
  NetworkParams d;
  Tensor real, fake;
  DiscriminatorOutput out_r, out_f;

  LossFixture() {
    arch.input_dim = 2;
    arch.hidden = {32, 32};
    arch.output_dim = 8;
    arch.head = Head::kEmbedding;
    d = init_params(arch, 77);
    Rng rng(rng_stream(6, "loss_fixture"));
    real = rng.normal_tensor({8, 2});
    fake = rng.normal_tensor({8, 2});
    out_r = discriminator_forward(d, real);
    out_f = discriminator_forward(d, fake);
  }
};

}  // namespace

TEST_CASE("discriminator loss reduces to -d when all weights vanish") {
  LossFixture fx;
  ObjectiveConfig cfg;
  cfg.lambda_c = cfg.lambda_s = cfg.lambda_h = 0;
  LossBreakdown lb =
      discriminator_loss(fx.out_r, fx.out_f, std::nullopt, std::nullopt, cfg);
  const double d = jsd_gaussian(fx.out_r.z, fx.out_f.z).value().item();
  CHECK(lb.total_value == doctest::Approx(-d).epsilon(1e-12));
  CHECK(lb.gaussian == doctest::Approx(d));
}

TEST_CASE("loss breakdown totals equal the documented signed combination") {
  LossFixture fx;
  Rng rng(rng_stream(7, "breakdown"));
  ObjectiveConfig cfg;  // defaults: lambda_h 4, lambda_c 3, lambda_s 5
  CHECK(cfg.lambda_h == 4.0);
  CHECK(cfg.lambda_c == 3.0);
  CHECK(cfg.lambda_s == 5.0);
  CHECK(cfg.lip_target == 1.0);
  const int64_t n = 8, k = 3, p = 8;
  Tensor nr = rng.normal_tensor({n, k, p});
  Tensor nf = rng.normal_tensor({n, k, p});
  for (Tensor* t : {&nr, &nf})
    for (int64_t i = 0; i < n * k; ++i) {
      double s = 0;
      for (int64_t j = 0; j < p; ++j)
        s += t->mutable_data()[i * p + j] * t->mutable_data()[i * p + j];
      s = std::sqrt(s);
      for (int64_t j = 0; j < p; ++j) t->mutable_data()[i * p + j] /= s;
    }

  Var x_leaf = leaf(fx.real, true);
  ParamVars pv = ParamVars::from(fx.d, true);
  DiscriminatorOutput out_r = discriminator_forward(fx.arch, pv, x_leaf);
  DiscriminatorOutput out_f =
      discriminator_forward(fx.arch, pv, constant(fx.fake));
  SpectralEstimate est =
      spectral_norm_estimate_from(out_r.z_tilde, x_leaf, 2, 99);
  LossBreakdown lb =
      discriminator_loss(out_r, out_f, ClusterInputs{nr, nf}, est, cfg);
  const double want = -lb.gaussian - cfg.lambda_c * lb.cluster_real +
                      cfg.lambda_c * lb.cluster_fake + cfg.lambda_s * lb.smooth +
                      cfg.lambda_h * lb.hinge_norm;
  CHECK(lb.total_value == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("raising real-neighbor similarity strictly lowers the D total") {
  LossFixture fx;
  ObjectiveConfig cfg;
  cfg.lambda_s = cfg.lambda_h = 0;
  cfg.lambda_c = 3.0;
  const int64_t n = 8, k = 2, p = 8;
  // Aligned neighbors: copies of the query embeddings themselves.
  Tensor aligned = Tensor::uninit({n, k, p});
  const Tensor& z = fx.out_r.z.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t c = 0; c < p; ++c)
        aligned.mutable_data()[(i * k + j) * p + c] = z.at(i, c);
  Tensor orth = Tensor::uninit({n, k, p});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t c = 0; c < p; ++c)
        orth.mutable_data()[(i * k + j) * p + c] =
            (c % 2 ? 1 : -1) * z.at(i, (c + 1) % p);
  Tensor nf = aligned;  // fake side held fixed
  LossBreakdown hi = discriminator_loss(fx.out_r, fx.out_f,
                                        ClusterInputs{aligned, nf}, std::nullopt,
                                        cfg);
  LossBreakdown lo = discriminator_loss(fx.out_r, fx.out_f,
                                        ClusterInputs{orth, nf}, std::nullopt,
                                        cfg);
  CHECK(hi.cluster_real > lo.cluster_real);
  CHECK(hi.total_value < lo.total_value);
}

TEST_CASE("generator loss: reduction, alignment, and neighbor preference") {
  LossFixture fx;
  ObjectiveConfig cfg;
  cfg.lambda_c = 0;
  LossBreakdown lb = generator_loss(fx.out_r, fx.out_f, std::nullopt, cfg);
  CHECK(lb.total_value ==
        doctest::Approx(jsd_gaussian(fx.out_r.z, fx.out_f.z).value().item()));

  // Perfect alignment: the distance term is ~0.
  LossBreakdown aligned = generator_loss(fx.out_r, fx.out_r, std::nullopt, cfg);
  CHECK(std::abs(aligned.total_value) <= 1e-10);

  // Fake neighbors aligned with the fakes lower the G loss.
  cfg.lambda_c = 3.0;
  const int64_t n = 8, k = 2, p = 8;
  Tensor nb_aligned = Tensor::uninit({n, k, p});
  Tensor nb_orth = Tensor::uninit({n, k, p});
  const Tensor& zf = fx.out_f.z.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t c = 0; c < p; ++c) {
        nb_aligned.mutable_data()[(i * k + j) * p + c] = zf.at(i, c);
        nb_orth.mutable_data()[(i * k + j) * p + c] =
            (c % 2 ? 1 : -1) * zf.at(i, (c + 1) % p);
      }
  LossBreakdown ga = generator_loss(fx.out_r, fx.out_f, nb_aligned, cfg);
  LossBreakdown go = generator_loss(fx.out_r, fx.out_f, nb_orth, cfg);
  CHECK(ga.total_value < go.total_value);
}

TEST_CASE("discriminator and generator are antagonistic on the distance term") {
  LossFixture fx;
  ObjectiveConfig cfg;
  cfg.lambda_c = cfg.lambda_s = cfg.lambda_h = 0;
  LossBreakdown ld =
      discriminator_loss(fx.out_r, fx.out_f, std::nullopt, std::nullopt, cfg);
  LossBreakdown lg = generator_loss(fx.out_r, fx.out_f, std::nullopt, cfg);
  CHECK(ld.total_value == doctest::Approx(-lg.total_value).epsilon(1e-12));
}

TEST_CASE("hinge GAN losses") {
  Var ones = constant(Tensor::full({4}, 1.0));
  Var neg_ones = constant(Tensor::full({4}, -1.0));
  Var zeros = constant(Tensor::zeros({4}));

  auto [d0, g0] = hinge_gan_losses(ones, neg_ones);
  CHECK(d0.value().item() == 0.0);  // margins satisfied
  (void)g0;

  auto [d1, g1] = hinge_gan_losses(zeros, zeros);
  CHECK(d1.value().item() == doctest::Approx(2.0));
  (void)g1;

  // loss_G decreases monotonically in the fake scores.
  double prev = 1e300;
  for (double s : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    auto [d, g] = hinge_gan_losses(zeros, constant(Tensor::full({4}, s)));
    (void)d;
    CHECK(g.value().item() < prev);
    prev = g.value().item();
  }
}

TEST_CASE("hinge baseline matches the plain hinge formulas exactly") {
  Rng rng(rng_stream(8, "baseline"));
  Tensor sr = rng.normal_tensor({6});
  Tensor sf = rng.normal_tensor({6});
  auto [ld, lg] = hinge_gan_losses(constant(sr), constant(sf));
  double want_d = 0, want_g = 0;
  for (int64_t i = 0; i < 6; ++i) {
    want_d += std::max(0.0, 1.0 - sr.at(i)) + std::max(0.0, 1.0 + sf.at(i));
    want_g -= sf.at(i);
  }
  CHECK(ld.value().item() == doctest::Approx(want_d / 6).epsilon(1e-12));
  CHECK(lg.value().item() == doctest::Approx(want_g / 6).epsilon(1e-12));

  ObjectiveConfig cfg;
  cfg.distance = Distance::kHingeBaseline;
  LossFixture fx;
  CHECK_THROWS_AS(
      discriminator_loss(fx.out_r, fx.out_f, std::nullopt, std::nullopt, cfg),
      config_error);
}
