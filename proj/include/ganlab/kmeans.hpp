#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "ganlab/blas.hpp"
#include "ganlab/metrics.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

struct ClusterResult {
  std::vector<int> assignments;
  Tensor centroids;  // (K, p), unit rows
  double inertia = 0;  // sum of (1 - cosine) to the assigned centroid
  std::vector<double> inertia_history;  // post-assignment, per iteration
  int64_t iterations = 0;
};

namespace detail {

inline void check_unit_rows(const Tensor& f) {
  const int64_t n = f.rows(), p = f.cols();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < p; ++j) s += f.at(i, j) * f.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
      throw error("spherical k-means: row " + std::to_string(i) +
                  " is not L2-normalized");
  }
}

}  // namespace detail

// Spherical K-means: k-means++-style seeding on cosine distance, then
// alternating max-cosine assignment and renormalized-mean updates.
// Post-assignment inertia is checked non-increasing every iteration.
// An emptied cluster is reseeded at the point farthest from its
// assigned centroid.
inline ClusterResult spherical_kmeans(const Tensor& features, int64_t k,
                                      int64_t max_iters, uint64_t seed) {
  if (features.rank() != 2) throw shape_error("spherical k-means: rank-2 input");
  const int64_t n = features.rows(), p = features.cols();
  if (n < k)
    throw error("spherical k-means: n = " + std::to_string(n) + " < K = " +
                std::to_string(k));
  if (k < 1) throw config_error("spherical k-means: K must be positive");
  detail::check_unit_rows(features);

  Rng rng(rng_stream(seed, "kmeans_seed"));
  Tensor centroids = Tensor::zeros({k, p});
  // k-means++ seeding with D(x)^2 weights, D = 1 - max cosine.
  std::vector<double> dist(static_cast<size_t>(n), 1.0);
  {
    const int64_t first = rng.next_below(n);
    for (int64_t j = 0; j < p; ++j) centroids.at(0, j) = features.at(first, j);
    for (int64_t c = 1; c < k; ++c) {
      for (int64_t i = 0; i < n; ++i) {
        double cs = 0;
        for (int64_t j = 0; j < p; ++j)
          cs += features.at(i, j) * centroids.at(c - 1, j);
        dist[static_cast<size_t>(i)] =
            std::min(dist[static_cast<size_t>(i)], std::max(0.0, 1.0 - cs));
      }
      double total = 0;
      for (double d : dist) total += d * d;
      int64_t pick = 0;
      if (total > 0) {
        double r = rng.next_double() * total, acc = 0;
        for (int64_t i = 0; i < n; ++i) {
          acc += dist[static_cast<size_t>(i)] * dist[static_cast<size_t>(i)];
          if (acc >= r) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.next_below(n);
      }
      for (int64_t j = 0; j < p; ++j) centroids.at(c, j) = features.at(pick, j);
    }
  }

  ClusterResult res;
  res.assignments.assign(static_cast<size_t>(n), -1);
  std::vector<double> sims(static_cast<size_t>(n * k));
  double prev_inertia = 1e300;
  for (int64_t iter = 0; iter < max_iters; ++iter) {
    gemm(false, true, n, k, p, features.data(), centroids.data(), sims.data());
    bool changed = false;
    double inertia = 0;
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double bc = sims[static_cast<size_t>(i * k)];
      for (int64_t c = 1; c < k; ++c)
        if (sims[static_cast<size_t>(i * k + c)] > bc) {
          bc = sims[static_cast<size_t>(i * k + c)];
          best = static_cast<int>(c);
        }
      if (res.assignments[static_cast<size_t>(i)] != best) {
        res.assignments[static_cast<size_t>(i)] = best;
        changed = true;
      }
      inertia += 1.0 - bc;
    }
    ++res.iterations;
    if (inertia > prev_inertia + 1e-9)
      throw error("spherical k-means: inertia increased (" +
                  std::to_string(prev_inertia) + " -> " + std::to_string(inertia) +
                  ")");
    prev_inertia = inertia;
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);
    if (!changed && iter > 0) break;

    // Update step: renormalized means.
    Tensor next = Tensor::zeros({k, p});
    std::vector<int64_t> counts(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int c = res.assignments[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      for (int64_t j = 0; j < p; ++j) next.at(c, j) += features.at(i, j);
    }
    for (int64_t c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        // Reseed at the point farthest from its assigned centroid.
        int64_t worst = 0;
        double worst_d = -1;
        for (int64_t i = 0; i < n; ++i) {
          const double cs = sims[static_cast<size_t>(
              i * k + res.assignments[static_cast<size_t>(i)])];
          if (1.0 - cs > worst_d) {
            worst_d = 1.0 - cs;
            worst = i;
          }
        }
        for (int64_t j = 0; j < p; ++j) next.at(c, j) = features.at(worst, j);
        continue;
      }
      double norm = 0;
      for (int64_t j = 0; j < p; ++j) norm += next.at(c, j) * next.at(c, j);
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (int64_t j = 0; j < p; ++j) next.at(c, j) /= norm;
      } else {
        for (int64_t j = 0; j < p; ++j) next.at(c, j) = centroids.at(c, j);
      }
    }
    centroids = next;
  }
  res.centroids = centroids;
  return res;
}

struct KmeansProtocolResult {
  double mean_accuracy = 0;
  double sd_accuracy = 0;
  double mean_nmi = 0;
  double mean_purity = 0;
  std::vector<double> accuracies;
};

// Repeated clustering with distinct seeds, each run mapped to ground
// truth by optimal assignment; reports the average. Repeats execute
// concurrently over the read-only feature matrix.
inline KmeansProtocolResult kmeans_protocol(const Tensor& features,
                                            const std::vector<int>& labels,
                                            int64_t k, int64_t repeats,
                                            uint64_t seed,
                                            int64_t max_iters = 100) {
  if (repeats < 1) throw config_error("kmeans protocol: repeats must be >= 1");
  KmeansProtocolResult out;
  out.accuracies.assign(static_cast<size_t>(repeats), 0.0);
  std::vector<double> nmis(static_cast<size_t>(repeats), 0.0);
  std::vector<double> purities(static_cast<size_t>(repeats), 0.0);
  auto run = [&](int64_t r) {
    ClusterResult cr = spherical_kmeans(features, k, max_iters,
                                        rng_stream(seed, "protocol", r));
    out.accuracies[static_cast<size_t>(r)] =
        optimal_assignment_accuracy(cr.assignments, labels);
    nmis[static_cast<size_t>(r)] = nmi(cr.assignments, labels);
    purities[static_cast<size_t>(r)] = purity(cr.assignments, labels);
  };
  const int64_t workers =
      std::min<int64_t>(repeats, std::max(1u, std::thread::hardware_concurrency()));
  if (workers > 1) {
    std::vector<std::thread> threads;
    std::atomic<int64_t> next{0};
    for (int64_t w = 0; w < workers; ++w)
      threads.emplace_back([&] {
        for (;;) {
          const int64_t r = next.fetch_add(1);
          if (r >= repeats) return;
          run(r);
        }
      });
    for (auto& t : threads) t.join();
  } else {
    for (int64_t r = 0; r < repeats; ++r) run(r);
  }
  double sum = 0;
  for (int64_t r = 0; r < repeats; ++r) {
    sum += out.accuracies[static_cast<size_t>(r)];
    out.mean_nmi += nmis[static_cast<size_t>(r)];
    out.mean_purity += purities[static_cast<size_t>(r)];
  }
  out.mean_accuracy = sum / static_cast<double>(repeats);
  out.mean_nmi /= static_cast<double>(repeats);
  out.mean_purity /= static_cast<double>(repeats);
  double ss = 0;
  for (double a : out.accuracies) {
    const double d = a - out.mean_accuracy;
    ss += d * d;
  }
  out.sd_accuracy = std::sqrt(ss / static_cast<double>(repeats));
  return out;
}

}  // namespace ganlab
