#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ganlab/metrics.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

struct ProbeConfig {
  double c = 1.0;        // inverse regularization; lambda = 1/(c * n)
  int64_t epochs = 500;
  uint64_t seed = 0;
};

// Linear classifier on frozen features: L2-regularized multiclass hinge
// loss minimized by subgradient descent (Pegasos-style schedule with a
// weight-scale accumulator). Returns validation accuracy.
inline double linear_probe(const Tensor& train_feats,
                           const std::vector<int>& train_labels,
                           const Tensor& val_feats,
                           const std::vector<int>& val_labels,
                           const ProbeConfig& cfg = {}) {
  if (train_feats.rank() != 2 || val_feats.rank() != 2 ||
      train_feats.cols() != val_feats.cols())
    throw shape_error("linear probe: feature shapes disagree");
  const int64_t n = train_feats.rows();
  const int64_t d = train_feats.cols();
  if (static_cast<int64_t>(train_labels.size()) != n ||
      static_cast<int64_t>(val_labels.size()) != val_feats.rows())
    throw shape_error("linear probe: label counts disagree");
  if (!train_feats.all_finite() || !val_feats.all_finite())
    throw numeric_error("linear probe: non-finite features");
  const int64_t classes =
      std::max(detail::label_span(train_labels), detail::label_span(val_labels));
  if (classes < 2) throw error("linear probe: need at least two classes");
  {
    bool multi = false;
    for (int l : train_labels)
      if (l != train_labels[0]) {
        multi = true;
        break;
      }
    if (!multi) throw error("linear probe: degenerate single-class training set");
  }

  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));
  const int64_t dim = d + 1;  // bias column
  std::vector<double> w(static_cast<size_t>(classes * dim), 0.0);
  double wscale = 1.0;
  Rng rng(rng_stream(cfg.seed, "probe"));
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  int64_t t = 1;
  std::vector<double> scores(static_cast<size_t>(classes));
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(rng.next_below(i + 1))]);
    for (int64_t s = 0; s < n; ++s, ++t) {
      const int64_t idx = order[static_cast<size_t>(s)];
      const double* x = train_feats.data() + idx * d;
      const int y = train_labels[static_cast<size_t>(idx)];
      for (int64_t c = 0; c < classes; ++c) {
        const double* wr = w.data() + c * dim;
        double sc = wr[d];  // bias
        for (int64_t j = 0; j < d; ++j) sc += wr[j] * x[j];
        scores[static_cast<size_t>(c)] = wscale * sc;
      }
      int rival = y == 0 ? 1 : 0;
      for (int64_t c = 0; c < classes; ++c)
        if (c != y && scores[static_cast<size_t>(c)] >
                          scores[static_cast<size_t>(rival)])
          rival = static_cast<int>(c);
      const double eta = 1.0 / (lambda * static_cast<double>(t + 1));
      wscale *= 1.0 - eta * lambda;
      if (1.0 + scores[static_cast<size_t>(rival)] -
              scores[static_cast<size_t>(y)] >
          0.0) {
        const double step = eta / wscale;
        double* wy = w.data() + y * dim;
        double* wr = w.data() + rival * dim;
        for (int64_t j = 0; j < d; ++j) {
          wy[j] += step * x[j];
          wr[j] -= step * x[j];
        }
        wy[d] += step;
        wr[d] -= step;
      }
    }
  }

  int64_t hits = 0;
  for (int64_t i = 0; i < val_feats.rows(); ++i) {
    const double* x = val_feats.data() + i * d;
    int best = 0;
    double bs = -1e300;
    for (int64_t c = 0; c < classes; ++c) {
      const double* wr = w.data() + c * dim;
      double sc = wr[d];
      for (int64_t j = 0; j < d; ++j) sc += wr[j] * x[j];
      if (sc > bs) {
        bs = sc;
        best = static_cast<int>(c);
      }
    }
    if (best == val_labels[static_cast<size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(val_feats.rows());
}

}  // namespace ganlab
