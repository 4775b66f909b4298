#include "flowcut/affinity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "flowcut/errors.hpp"

namespace flowcut {

void AffinityConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
  if (tau > 0.0 && !(epsilon < tau && tau <= 1.0)) {
    throw ArgumentError("expected 0 < epsilon < tau <= 1");
  }
}

AffinityGraph AffinityGraph::from_dense(std::size_t n, std::vector<double> weights) {
  if (weights.size() != n * n) throw ShapeError("affinity matrix must be n x n");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (weights[i * n + j] != weights[j * n + i]) throw ShapeError("affinity matrix must be symmetric");
    }
  }
  AffinityGraph g;
  g.n_ = n;
  g.weights_ = std::move(weights);
  g.compute_degrees();
  return g;
}

AffinityGraph AffinityGraph::from_dense(std::size_t n, std::vector<float> weights) {
  if (weights.size() != n * n) throw ShapeError("affinity matrix must be n x n");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (weights[i * n + j] != weights[j * n + i]) throw ShapeError("affinity matrix must be symmetric");
    }
  }
  AffinityGraph g;
  g.n_ = n;
  g.weights_ = std::move(weights);
  g.compute_degrees();
  return g;
}

WeightPrecision AffinityGraph::precision() const noexcept {
  return std::holds_alternative<std::vector<float>>(weights_) ? WeightPrecision::float32
                                                              : WeightPrecision::float64;
}

double AffinityGraph::weight(std::size_t i, std::size_t j) const {
  return std::visit([&](const auto& w) { return static_cast<double>(w[i * n_ + j]); }, weights_);
}

void AffinityGraph::multiply(std::span<const double> x, std::span<double> out) const {
  if (x.size() != n_ || out.size() != n_) throw ShapeError("matvec operand size mismatch");
  std::visit(
      [&](const auto& w) {
        for (std::size_t i = 0; i < n_; ++i) {
          const auto* row = w.data() + i * n_;
          double acc = 0.0;
          for (std::size_t j = 0; j < n_; ++j) acc += static_cast<double>(row[j]) * x[j];
          out[i] = acc;
        }
      },
      weights_);
}

std::vector<double> AffinityGraph::to_dense() const {
  std::vector<double> out(n_ * n_);
  std::visit([&](const auto& w) { std::copy(w.begin(), w.end(), out.begin()); }, weights_);
  return out;
}

std::vector<double> AffinityGraph::recompute_degrees() const {
  std::vector<double> d(n_, 0.0);
  std::visit(
      [&](const auto& w) {
        for (std::size_t i = 0; i < n_; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n_; ++j) acc += static_cast<double>(w[i * n_ + j]);
          d[i] = acc;
        }
      },
      weights_);
  return d;
}

void AffinityGraph::compute_degrees() { degrees_ = recompute_degrees(); }

double cosine_similarity(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw ShapeError("cosine similarity of vectors with different lengths");
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    dot += static_cast<double>(x[k]) * y[k];
    xx += static_cast<double>(x[k]) * x[k];
    yy += static_cast<double>(y[k]) * y[k];
  }
  if (xx == 0.0 || yy == 0.0) throw DegenerateFeature("cosine similarity of a zero-norm vector");
  return dot / (std::sqrt(xx) * std::sqrt(yy));
}

double combined_similarity(std::span<const float> app_i, std::span<const float> app_j,
                           std::span<const float> flow_i, std::span<const float> flow_j, double alpha) {
  double s = 0.0;
  if (alpha != 0.0) s += alpha * cosine_similarity(app_i, app_j);
  if (alpha != 1.0) s += (1.0 - alpha) * cosine_similarity(flow_i, flow_j);
  return s;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unit-normalised copies of each patch vector; zero rows mark degenerate patches.
RowMatrix normalized_rows(const FeatureGrid& grid, std::vector<char>& degenerate, std::size_t& count) {
  const auto n = grid.patches();
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.channels));
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = grid.patch(i);
    double norm2 = 0.0;
    for (float v : p) norm2 += static_cast<double>(v) * v;
    const auto r = static_cast<Eigen::Index>(i);
    if (norm2 == 0.0) {
      degenerate[i] = 1;
      ++count;
      out.row(r).setZero();
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t k = 0; k < grid.channels; ++k) {
      out(r, static_cast<Eigen::Index>(k)) = static_cast<double>(p[k]) * inv;
    }
  }
  return out;
}

template <typename T>
std::vector<T> threshold_weights(const FeatureGrid& app, const FeatureGrid& flow, const AffinityConfig& cfg,
                                 GraphBuildReport& report) {
  const auto n = app.patches();
  const bool use_app = cfg.alpha != 0.0;
  const bool use_flow = cfg.alpha != 1.0;
  std::vector<char> degenerate(n, 0);

  RowMatrix xa, xf;
  if (use_app) xa = normalized_rows(app, degenerate, report.degenerate_appearance);
  if (use_flow) xf = normalized_rows(flow, degenerate, report.degenerate_flow);

  const T one = T(1);
  const T eps = static_cast<T>(cfg.epsilon);
  std::vector<T> w(n * n, eps);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = cfg.self_loops ? one : T(0);

  constexpr std::size_t kBlock = 256;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const auto rows = std::min(kBlock, n - b);
    const auto rb = static_cast<Eigen::Index>(b);
    const auto rr = static_cast<Eigen::Index>(rows);
    Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(rr, static_cast<Eigen::Index>(n));
    if (use_app) sim.noalias() += cfg.alpha * (xa.middleRows(rb, rr) * xa.transpose());
    if (use_flow) sim.noalias() += (1.0 - cfg.alpha) * (xf.middleRows(rb, rr) * xf.transpose());
    for (std::size_t i = b; i < b + rows; ++i) {
      if (degenerate[i]) continue;
      const auto r = static_cast<Eigen::Index>(i - b);
      for (std::size_t j = i + 1; j < n; ++j) {
        if (degenerate[j]) continue;
        if (sim(r, static_cast<Eigen::Index>(j)) >= cfg.tau) {
          w[i * n + j] = one;
          w[j * n + i] = one;
        }
      }
    }
  }
  return w;
}

}  // namespace

AffinityGraph build_graph(const FeatureGrid& appearance, const FeatureGrid& flow, const AffinityConfig& cfg,
                          GraphBuildReport* report) {
  cfg.validate();
  appearance.validate();
  flow.validate();
  if (appearance.rows != flow.rows || appearance.cols != flow.cols) {
    throw ShapeError("appearance grid " + std::to_string(appearance.rows) + "x" +
                     std::to_string(appearance.cols) + " and flow grid " + std::to_string(flow.rows) + "x" +
                     std::to_string(flow.cols) + " differ");
  }
  if (appearance.kind != FeatureKind::appearance || flow.kind != FeatureKind::flow) {
    throw ShapeError("build_graph expects an appearance grid and a flow grid");
  }
  GraphBuildReport local;
  auto& rep = report ? *report : local;
  rep = {};
  const auto n = appearance.patches();
  if (cfg.precision == WeightPrecision::float32) {
    return AffinityGraph::from_dense(n, threshold_weights<float>(appearance, flow, cfg, rep));
  }
  return AffinityGraph::from_dense(n, threshold_weights<double>(appearance, flow, cfg, rep));
}

}  // namespace flowcut
