#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ganlab/blas.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Scatter plot as a standalone SVG document. `labels` may be empty
// (single color) or hold one class index per row.
inline void write_svg_scatter(const std::string& path, const Tensor& points,
                              const std::vector<int>& labels,
                              const std::string& title) {
  if (points.rank() != 2 || points.cols() != 2)
    throw shape_error("svg scatter: (n,2) points required");
  if (!labels.empty() && static_cast<int64_t>(labels.size()) != points.rows())
    throw shape_error("svg scatter: label count mismatch");
  std::ofstream os(path);
  if (!os) throw error("cannot open '" + path + "' for writing");

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int64_t i = 0; i < points.rows(); ++i) {
    xmin = std::min(xmin, points.at(i, 0));
    xmax = std::max(xmax, points.at(i, 0));
    ymin = std::min(ymin, points.at(i, 1));
    ymax = std::max(ymax, points.at(i, 1));
  }
  const double pad = 0.05 * std::max(xmax - xmin, ymax - ymin) + 1e-9;
  xmin -= pad;
  xmax += pad;
  ymin -= pad;
  ymax += pad;
  const int w = 640, h = 640;
  auto sx = [&](double x) { return (x - xmin) / (xmax - xmin) * w; };
  auto sy = [&](double y) { return h - (y - ymin) / (ymax - ymin) * h; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};

  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<title>" << title << "</title>\n";
  for (int64_t i = 0; i < points.rows(); ++i) {
    const char* color =
        labels.empty() ? palette[2]
                       : palette[static_cast<size_t>(labels[static_cast<size_t>(i)]) % 6];
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" "
                  "fill-opacity=\"0.7\"/>\n",
                  sx(points.at(i, 0)), sy(points.at(i, 1)), color);
    os << buf;
  }
  os << "</svg>\n";
  if (!os) throw error("failed writing '" + path + "'");
}

// First two principal components of a feature matrix (power iteration
// with deflation on the covariance). Component variances come out in
// non-increasing order.
inline Tensor pca_2d(const Tensor& feats) {
  if (feats.rank() != 2) throw shape_error("pca: rank-2 input required");
  const int64_t n = feats.rows(), d = feats.cols();
  std::vector<double> mu(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += feats.at(i, j);
  for (double& m : mu) m /= static_cast<double>(n);
  Tensor centered = Tensor::zeros({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      centered.at(i, j) = feats.at(i, j) - mu[static_cast<size_t>(j)];
  Tensor cov = Tensor::zeros({d, d});
  gemm(true, false, d, d, n, centered.data(), centered.data(),
       cov.mutable_data());
  for (int64_t i = 0; i < d * d; ++i)
    cov.mutable_data()[i] /= static_cast<double>(n);

  Tensor dirs = Tensor::zeros({2, d});
  Tensor work = cov.clone();
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(static_cast<size_t>(d), 0.0);
    v[static_cast<size_t>(comp % d)] = 1.0;
    double lambda = 0;
    for (int it = 0; it < 300; ++it) {
      std::vector<double> nv(static_cast<size_t>(d), 0.0);
      for (int64_t i = 0; i < d; ++i) {
        double s = 0;
        for (int64_t j = 0; j < d; ++j)
          s += work.at(i, j) * v[static_cast<size_t>(j)];
        nv[static_cast<size_t>(i)] = s;
      }
      double norm = 0;
      for (double x : nv) norm += x * x;
      norm = std::sqrt(norm);
      if (!(norm > 1e-30)) break;
      for (int64_t i = 0; i < d; ++i) nv[static_cast<size_t>(i)] /= norm;
      v = nv;
      lambda = norm;
    }
    for (int64_t j = 0; j < d; ++j) dirs.at(comp, j) = v[static_cast<size_t>(j)];
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j)
        work.at(i, j) -= lambda * v[static_cast<size_t>(i)] * v[static_cast<size_t>(j)];
  }
  Tensor proj = Tensor::zeros({n, 2});
  gemm(false, true, n, 2, d, centered.data(), dirs.data(), proj.mutable_data());
  return proj;
}

}  // namespace ganlab
