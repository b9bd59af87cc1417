#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Archimedean double spiral: arm 0 traces (a*t*cos t, a*t*sin t) for
// t in [pi/4, 4*pi]; arm 1 is its point reflection. Chosen so the arms
// interleave with a small gap at unit outer radius.
struct SpiralShape {
  double a = 1.0 / (4.0 * 3.14159265358979323846);
  double t_min = 3.14159265358979323846 / 4.0;
  double t_max = 4.0 * 3.14159265358979323846;
};

struct LabeledPoints {
  Tensor points;            // (n, 2), standardized per axis
  std::vector<int> labels;  // arm index in {0, 1}
  // Standardization transform: original = standardized * scale + mean.
  double mean[2] = {0, 0};
  double scale[2] = {1, 1};
  double noise_sd = 0;  // pre-standardization
  SpiralShape shape;

  void destandardize(double sx, double sy, double& ox, double& oy) const {
    ox = sx * scale[0] + mean[0];
    oy = sy * scale[1] + mean[1];
  }
};

namespace detail {

// Isotropic noise with the norm rejected above 4 sd, keeping every point
// within the declared radius bound.
inline void bounded_noise(Rng& rng, double sd, double& nx, double& ny) {
  if (sd <= 0) {
    nx = ny = 0;
    return;
  }
  const double cap2 = 16.0 * sd * sd;
  for (;;) {
    nx = sd * rng.next_normal();
    ny = sd * rng.next_normal();
    if (nx * nx + ny * ny <= cap2) return;
  }
}

}  // namespace detail

// Balanced two-arm sample, deterministic per (n, noise_sd, seed); output
// coordinates standardized to zero mean, unit per-axis variance. Arm-1
// points are the negation of same-parameter arm-0 points before noise.
inline LabeledPoints sample_spirals(int64_t n, double noise_sd, uint64_t seed) {
  if (n < 2) throw config_error("sample_spirals: need n >= 2");
  if (noise_sd < 0) throw config_error("sample_spirals: negative noise");
  LabeledPoints out;
  out.noise_sd = noise_sd;
  const SpiralShape sp = out.shape;
  const int64_t n0 = (n + 1) / 2;  // arm 0 gets the extra point when odd
  const int64_t n1 = n - n0;

  Rng t_rng(rng_stream(seed, "spiral_t"));
  Rng noise_rng(rng_stream(seed, "spiral_noise"));
  std::vector<double> ts(static_cast<size_t>(n0));
  for (int64_t i = 0; i < n0; ++i)
    ts[static_cast<size_t>(i)] = t_rng.next_uniform(sp.t_min, sp.t_max);

  Tensor pts = Tensor::zeros({n, 2});
  double* p = pts.mutable_data();
  out.labels.assign(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n0; ++i) {
    const double t = ts[static_cast<size_t>(i)];
    const double r = sp.a * t;
    double nx, ny;
    detail::bounded_noise(noise_rng, noise_sd, nx, ny);
    p[2 * i] = r * std::cos(t) + nx;
    p[2 * i + 1] = r * std::sin(t) + ny;
  }
  for (int64_t i = 0; i < n1; ++i) {
    const double t = ts[static_cast<size_t>(i)];
    const double r = sp.a * t;
    double nx, ny;
    detail::bounded_noise(noise_rng, noise_sd, nx, ny);
    const int64_t row = n0 + i;
    p[2 * row] = -(r * std::cos(t)) + nx;
    p[2 * row + 1] = -(r * std::sin(t)) + ny;
    out.labels[static_cast<size_t>(row)] = 1;
  }

  for (int axis = 0; axis < 2; ++axis) {
    double mu = 0;
    for (int64_t i = 0; i < n; ++i) mu += p[2 * i + axis];
    mu /= static_cast<double>(n);
    double var = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = p[2 * i + axis] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var > 1e-24 ? var : 1e-24);
    for (int64_t i = 0; i < n; ++i) p[2 * i + axis] = (p[2 * i + axis] - mu) / sd;
    out.mean[axis] = mu;
    out.scale[axis] = sd;
  }
  out.points = pts;
  return out;
}

// Standard normal draws, (n, dim), deterministic per seed.
inline Tensor sample_prior(int64_t n, int64_t dim, uint64_t seed) {
  if (n < 1 || dim < 1)
    throw config_error("sample_prior: n and dim must be positive");
  Rng rng(rng_stream(seed, "prior"));
  return rng.normal_tensor({n, dim});
}

// Distance from an original-coordinates point to the nearest point of
// either noiseless arm, via a dense parameter grid.
inline double spiral_curve_distance(const SpiralShape& sp, double x, double y,
                                    int64_t grid = 16384) {
  double best = 1e300;
  const double dt = (sp.t_max - sp.t_min) / static_cast<double>(grid - 1);
  for (int64_t i = 0; i < grid; ++i) {
    const double t = sp.t_min + dt * static_cast<double>(i);
    const double r = sp.a * t;
    const double cx = r * std::cos(t), cy = r * std::sin(t);
    const double d0 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    const double d1 = (x + cx) * (x + cx) + (y + cy) * (y + cy);
    best = std::min(best, std::min(d0, d1));
  }
  return std::sqrt(best);
}

}  // namespace ganlab
