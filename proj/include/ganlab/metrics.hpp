#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ganlab/tensor.hpp"

namespace ganlab {

namespace detail {

// Exact rectangular assignment (Hungarian, shortest augmenting path,
// O(n^3)) minimizing total cost of a square matrix.
inline std::vector<int64_t> hungarian_min(const std::vector<double>& cost,
                                          int64_t n) {
  const double kInf = 1e300;
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0);
  std::vector<double> v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int64_t> p(static_cast<size_t>(n + 1), 0);
  std::vector<int64_t> way(static_cast<size_t>(n + 1), 0);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), kInf);
    std::vector<char> used(static_cast<size_t>(n + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int64_t i0 = p[static_cast<size_t>(j0)];
      double delta = kInf;
      int64_t j1 = 0;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>((i0 - 1) * n + (j - 1))] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int64_t j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int64_t> row_to_col(static_cast<size_t>(n), -1);
  for (int64_t j = 1; j <= n; ++j)
    if (p[static_cast<size_t>(j)] > 0)
      row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

inline int64_t label_span(const std::vector<int>& labels) {
  int64_t m = 0;
  for (int x : labels) {
    if (x < 0) throw error("labels must be nonnegative");
    m = std::max<int64_t>(m, x + 1);
  }
  return m;
}

}  // namespace detail

// Accuracy under the cluster -> class bijection that maximizes matches,
// solved exactly. Invariant under relabeling of either argument.
inline double optimal_assignment_accuracy(const std::vector<int>& pred,
                                          const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw error("optimal_assignment_accuracy: empty or mismatched inputs");
  const int64_t kp = detail::label_span(pred);
  const int64_t kt = detail::label_span(truth);
  const int64_t n = std::max(kp, kt);
  std::vector<double> count(static_cast<size_t>(n * n), 0.0);
  for (size_t i = 0; i < pred.size(); ++i)
    count[static_cast<size_t>(pred[i] * n + truth[i])] += 1.0;
  double cmax = 0;
  for (double c : count) cmax = std::max(cmax, c);
  std::vector<double> cost(count.size());
  for (size_t i = 0; i < count.size(); ++i) cost[i] = cmax - count[i];
  std::vector<int64_t> match = detail::hungarian_min(cost, n);
  double hits = 0;
  for (int64_t r = 0; r < n; ++r)
    hits += count[static_cast<size_t>(r * n + match[static_cast<size_t>(r)])];
  return hits / static_cast<double>(pred.size());
}

// I(pred; truth) / sqrt(H(pred) H(truth)) with natural logs; defined as 0
// when either partition has a single block (zero entropy).
inline double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw error("nmi: empty or mismatched inputs");
  const int64_t kp = detail::label_span(pred);
  const int64_t kt = detail::label_span(truth);
  const double n = static_cast<double>(pred.size());
  std::vector<double> joint(static_cast<size_t>(kp * kt), 0.0);
  std::vector<double> pa(static_cast<size_t>(kp), 0.0);
  std::vector<double> pb(static_cast<size_t>(kt), 0.0);
  for (size_t i = 0; i < pred.size(); ++i) {
    joint[static_cast<size_t>(pred[i] * kt + truth[i])] += 1.0;
    pa[static_cast<size_t>(pred[i])] += 1.0;
    pb[static_cast<size_t>(truth[i])] += 1.0;
  }
  double info = 0, ha = 0, hb = 0;
  for (int64_t a = 0; a < kp; ++a) {
    const double q = pa[static_cast<size_t>(a)] / n;
    if (q > 0) ha -= q * std::log(q);
  }
  for (int64_t b = 0; b < kt; ++b) {
    const double q = pb[static_cast<size_t>(b)] / n;
    if (q > 0) hb -= q * std::log(q);
  }
  for (int64_t a = 0; a < kp; ++a)
    for (int64_t b = 0; b < kt; ++b) {
      const double pj = joint[static_cast<size_t>(a * kt + b)] / n;
      if (pj > 0)
        info += pj * std::log(pj * n * n /
                              (pa[static_cast<size_t>(a)] *
                               pb[static_cast<size_t>(b)]));
    }
  const double denom = std::sqrt(ha * hb);
  if (!(denom > 0)) return 0.0;
  return info / denom;
}

// (1/n) * sum over clusters of the dominant class count.
inline double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw error("purity: empty or mismatched inputs");
  const int64_t kp = detail::label_span(pred);
  const int64_t kt = detail::label_span(truth);
  std::vector<double> count(static_cast<size_t>(kp * kt), 0.0);
  for (size_t i = 0; i < pred.size(); ++i)
    count[static_cast<size_t>(pred[i] * kt + truth[i])] += 1.0;
  double total = 0;
  for (int64_t a = 0; a < kp; ++a) {
    double best = 0;
    for (int64_t b = 0; b < kt; ++b)
      best = std::max(best, count[static_cast<size_t>(a * kt + b)]);
    total += best;
  }
  return total / static_cast<double>(pred.size());
}

}  // namespace ganlab
