#pragma once

// Pairwise O(n^2) affinity straight from the definition: cosine per pair,
// combined with alpha, thresholded at tau.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "flowcut/affinity.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut::oracle {

inline double naive_cosine(const float* a, const float* b, std::size_t c, bool& degenerate) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < c; ++k) {
    dot += static_cast<long double>(a[k]) * b[k];
    na += static_cast<long double>(a[k]) * a[k];
    nb += static_cast<long double>(b[k]) * b[k];
  }
  degenerate = na == 0 || nb == 0;
  return degenerate ? 0.0 : static_cast<double>(dot / std::sqrt(na * nb));
}

struct OracleGraph {
  std::vector<double> weights;  // row-major, in double
  double min_margin = std::numeric_limits<double>::infinity();  // min |s_ij - tau| over pairs
};

inline OracleGraph pairwise_affinity(const FeatureGrid& app, const FeatureGrid& flow, const AffinityConfig& cfg) {
  const std::size_t n = app.rows * app.cols;
  OracleGraph out;
  out.weights.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        out.weights[i * n + j] = cfg.self_loops ? 1.0 : 0.0;
        continue;
      }
      bool deg_a = false, deg_f = false;
      double s = 0.0;
      if (cfg.alpha != 0.0) {
        s += cfg.alpha * naive_cosine(&app.data[i * app.channels], &app.data[j * app.channels], app.channels, deg_a);
      }
      if (cfg.alpha != 1.0) {
        s += (1.0 - cfg.alpha) *
             naive_cosine(&flow.data[i * flow.channels], &flow.data[j * flow.channels], flow.channels, deg_f);
      }
      if (deg_a || deg_f) {
        out.weights[i * n + j] = cfg.epsilon;
        continue;
      }
      out.min_margin = std::min(out.min_margin, std::abs(s - cfg.tau));
      out.weights[i * n + j] = s >= cfg.tau ? 1.0 : cfg.epsilon;
    }
  }
  return out;
}

}  // namespace flowcut::oracle
