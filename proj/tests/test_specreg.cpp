#include <cmath>
#include <vector>

#include "doctest.h"
#include "ganlab/network.hpp"
#include "ganlab/specnorm.hpp"
#include "ganlab/rng.hpp"
#include "support/oracles.hpp"

using namespace ganlab;

namespace {

// F(x) = x A^T so each sample's Jacobian is A (p x m).
TensorFn linear_map(const Tensor& a) {
  return [a](const Var& x) { return matmul(x, constant(a), false, true); };
}

}  // namespace

TEST_CASE("diagonal map: converges to the leading singular value") {
  Tensor a = Tensor::from_vector({2, 2}, {3, 0, 0, 1});
  Tensor x = Tensor::from_vector({1, 2}, {0.2, -0.4});
  SpectralEstimate est = spectral_norm_estimate(linear_map(a), x, 50, 7);
  CHECK(est.sigma_values.at(0) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("identity map: estimate is 1 for any S") {
  Tensor eye = Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = Tensor::from_vector({2, 3}, {1, 2, 3, -1, 0, 1});
  for (int64_t s : {1, 2, 5}) {
    SpectralEstimate est = spectral_norm_estimate(linear_map(eye), x, s, 3);
    for (int64_t i = 0; i < est.sigma_values.numel(); ++i)
      CHECK(est.sigma_values.at(i) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("random 7x5 map matches the dense SVD oracle") {
  Rng rng(rng_stream(0, "svd75"));
  Tensor a = rng.normal_tensor({5, 7});  // J = a: output 5, input 7
  Tensor x = rng.normal_tensor({1, 7});
  const double want = oracle::svd_max_singular(
      std::vector<double>(a.data(), a.data() + a.numel()), 5, 7);
  SpectralEstimate est = spectral_norm_estimate(linear_map(a), x, 50, 11);
  CHECK(est.sigma_values.at(0) ==
        doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("final iterates are unit rows and the estimate is nonnegative") {
  Rng rng(rng_stream(1, "iterates"));
  Tensor a = rng.normal_tensor({4, 6});
  Tensor x = rng.normal_tensor({3, 6});
  SpectralEstimate est = spectral_norm_estimate(linear_map(a), x, 3, 5);
  for (int64_t i = 0; i < 3; ++i) {
    double nu = 0, nv = 0;
    for (int64_t j = 0; j < 4; ++j) nu += est.u.at(i, j) * est.u.at(i, j);
    for (int64_t j = 0; j < 6; ++j) nv += est.v.at(i, j) * est.v.at(i, j);
    CHECK(std::abs(std::sqrt(nu) - 1.0) <= 1e-9);
    CHECK(std::abs(std::sqrt(nv) - 1.0) <= 1e-9);
    CHECK(est.sigma_values.at(i) >= 0.0);
  }
}

TEST_CASE("estimates never exceed the true spectral norm") {
  Rng rng(rng_stream(2, "lower_bound"));
  for (int trial = 0; trial < 40; ++trial) {
    const int64_t p = 1 + rng.next_below(16);
    const int64_t m = 1 + rng.next_below(16);
    Tensor a = rng.normal_tensor({p, m});
    Tensor x = rng.normal_tensor({2, m});
    const double smax = oracle::svd_max_singular(
        std::vector<double>(a.data(), a.data() + a.numel()), p, m);
    for (int64_t s : {1, 3, 10}) {
      SpectralEstimate est =
          spectral_norm_estimate(linear_map(a), x, s, 100 + trial);
      for (int64_t i = 0; i < est.sigma_values.numel(); ++i)
        CHECK(est.sigma_values.at(i) <= smax + 1e-9);
    }
  }
}

TEST_CASE("estimates are monotonically non-decreasing in S for linear maps") {
  Rng rng(rng_stream(3, "monotone"));
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = rng.normal_tensor({6, 6});
    Tensor x = rng.normal_tensor({1, 6});
    double prev = -1;
    for (int64_t s = 1; s <= 8; ++s) {
      SpectralEstimate est =
          spectral_norm_estimate(linear_map(a), x, s, 1000 + trial);
      CHECK(est.sigma_values.at(0) >= prev - 1e-9);
      prev = est.sigma_values.at(0);
    }
  }
}

TEST_CASE("sigma gradient equals the frozen-direction gradient of u^T J v") {
  // Parameterized map F(x) = x W with sigma differentiated w.r.t. W.
  Rng rng(rng_stream(4, "sigma_grad"));
  Tensor w0 = rng.normal_tensor({4, 3});
  Tensor x = rng.normal_tensor({2, 4});
  const uint64_t seed = 17;
  const int64_t steps = 4;

  Var w = leaf(w0, true);
  Var x_leaf = leaf(x, true);
  Var y = matmul(x_leaf, w);
  SpectralEstimate est = spectral_norm_estimate_from(y, x_leaf, steps, seed);
  Var loss = mean_all(est.sigma);
  Tensor got = grad_tensors(loss, std::span<const Var>(&w, 1))[0];

  // Finite differences with the SAME frozen u, v (mean of u_i^T (x_i dW) v_i).
  auto frozen_value = [&](const std::vector<double>& wflat) {
    Tensor wt = Tensor::from_vector({4, 3}, wflat);
    double total = 0;
    for (int64_t i = 0; i < 2; ++i) {
      // u_i^T J v_i with J = W^T per-sample (y = x W => dy/dx = W^T ... careful:
      // J maps dx (4) to dy (3): J = W^T, so u^T J v = u^T W^T v = v^T W u.
      double s = 0;
      for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 3; ++c)
          s += est.v.at(i, r) * wt.at(r, c) * est.u.at(i, c);
      total += s;
    }
    return total / 2.0;
  };
  std::vector<double> wflat(w0.data(), w0.data() + w0.numel());
  std::vector<double> fd = oracle::fd_gradient(frozen_value, wflat, 1e-6);
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got.at(i) == doctest::Approx(fd[static_cast<size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("sigma gradient on an MLP matches finite differences of u^T J v") {
  Rng rng(rng_stream(5, "sigma_grad_mlp"));
  const int64_t din = 3, dh = 6, dout = 4, n = 2;
  Tensor w1 = rng.normal_tensor({din, dh});
  Tensor b1 = rng.normal_tensor({dh});
  Tensor w2 = rng.normal_tensor({dh, dout});
  Tensor x = rng.normal_tensor({n, din});
  const uint64_t seed = 23;
  const int64_t steps = 3;

  auto forward = [&](const Var& w1v, const Var& xv) {
    Var h = elu(add_bias_row(matmul(xv, w1v), constant(b1)));
    return matmul(h, constant(w2));
  };
  Var w1v = leaf(w1, true);
  Var x_leaf = leaf(x, true);
  Var y = forward(w1v, x_leaf);
  SpectralEstimate est = spectral_norm_estimate_from(y, x_leaf, steps, seed);
  Tensor got =
      grad_tensors(mean_all(est.sigma), std::span<const Var>(&w1v, 1))[0];

  auto frozen_value = [&](const std::vector<double>& wflat) {
    // Recompute u^T J v with frozen u, v via one taped vjp at the new W.
    Var w1t = constant(Tensor::from_vector({din, dh}, wflat));
    Var xv = leaf(x, true);
    Var yy = forward(w1t, xv);
    Var w_row = vjp_from(yy, xv, constant(est.u));
    double total = 0;
    const Tensor& wr = w_row.value();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < din; ++j) total += wr.at(i, j) * est.v.at(i, j);
    return total / static_cast<double>(n);
  };
  std::vector<double> wflat(w1.data(), w1.data() + w1.numel());
  std::vector<double> fd = oracle::fd_gradient(frozen_value, wflat, 1e-6);
  for (int64_t i = 0; i < got.numel(); ++i) {
    const double denom = std::max(1e-6, std::abs(fd[static_cast<size_t>(i)]));
    CHECK(std::abs(got.at(i) - fd[static_cast<size_t>(i)]) / denom <= 1e-5);
  }
}

TEST_CASE("exactly 2S+1 differentiation passes per call") {
  Rng rng(rng_stream(6, "budget"));
  Tensor a = rng.normal_tensor({5, 5});
  Tensor x = rng.normal_tensor({2, 5});
  for (int64_t s : {1, 2, 7}) {
    const uint64_t before = diff_counters().passes;
    SpectralEstimate est = spectral_norm_estimate(linear_map(a), x, s, 5);
    CHECK(est.diff_passes == static_cast<uint64_t>(2 * s + 1));
    CHECK(diff_counters().passes - before == static_cast<uint64_t>(2 * s + 1));
  }
  for (int64_t s : {1, 3}) {
    SpectralEstimate est =
        spectral_norm_estimate(linear_map(a), x, s, 5, JvpMode::kForward);
    CHECK(est.diff_passes == static_cast<uint64_t>(2 * s + 1));
  }
}

TEST_CASE("a zero map triggers one resample and then a hard error") {
  auto zero_map = [](const Var& x) { return scale(x, 0.0); };
  Tensor x = Tensor::from_vector({1, 3}, {1, 2, 3});
  CHECK_THROWS_AS(spectral_norm_estimate(zero_map, x, 1, 9), numeric_error);
}

TEST_CASE("S must be at least one") {
  Rng rng(7);
  Tensor a = rng.normal_tensor({3, 3});
  Tensor x = rng.normal_tensor({1, 3});
  CHECK_THROWS_AS(spectral_norm_estimate(linear_map(a), x, 0, 1), config_error);
}

TEST_CASE("smoothness penalty values and config defaults") {
  Rng rng(8);
  Tensor a = rng.normal_tensor({3, 3});
  Tensor x = rng.normal_tensor({3, 3});
  SpectralEstimate est = spectral_norm_estimate(linear_map(a), x, 30, 2);

  // All sigma at the target -> penalty 0 (construct by dividing the map).
  SUBCASE("sigma == lip gives zero") {
    const double s0 = est.sigma_values.at(0);
    Tensor scaled = a.clone();
    // This only rescales the top singular value estimate approximately;
    // instead check the formula directly on a constant-sigma estimate.
    (void)scaled;
    SpectralEstimate unit = est;
    unit.sigma = constant(Tensor::full({3}, 1.0));
    CHECK(smoothness_penalty(unit, 1.0).value().item() == 0.0);
    (void)s0;
  }

  SUBCASE("sigma [3], lip 1 gives 2, one-sided matches on the high side") {
    SpectralEstimate three = est;
    three.sigma = constant(Tensor::full({1}, 3.0));
    CHECK(smoothness_penalty(three, 1.0).value().item() == doctest::Approx(2.0));
    CHECK(smoothness_penalty(three, 1.0, true).value().item() ==
          doctest::Approx(2.0));
    three.sigma = constant(Tensor::full({1}, 0.5));
    CHECK(smoothness_penalty(three, 1.0).value().item() == doctest::Approx(0.5));
    CHECK(smoothness_penalty(three, 1.0, true).value().item() == 0.0);
  }

  SUBCASE("lip target must be positive") {
    CHECK_THROWS_AS(smoothness_penalty(est, 0.0), config_error);
  }
}
