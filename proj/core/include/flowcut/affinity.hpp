#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowcut/tensor_io.hpp"

namespace flowcut {

enum class WeightPrecision { float32, float64 };

struct AffinityConfig {
  double alpha = 0.7;     // appearance share of the combined similarity
  double tau = 0.25;      // similarity threshold
  double epsilon = 1e-5;  // weight assigned below the threshold
  bool self_loops = true;
  WeightPrecision precision = WeightPrecision::float32;

  /// Throws ArgumentError unless 0 <= alpha <= 1 and 0 < epsilon < tau <= 1
  /// (tau > 0 case), 0 < epsilon otherwise.
  void validate() const;
};

/// Dense symmetric patch graph with cached degrees. Weights are kept in
/// either float or double storage; reads always return double.
class AffinityGraph {
 public:
  AffinityGraph() = default;

  /// Wraps an explicit symmetric n x n row-major matrix. Throws ShapeError if
  /// the matrix is not square or not exactly symmetric.
  static AffinityGraph from_dense(std::size_t n, std::vector<double> weights);
  static AffinityGraph from_dense(std::size_t n, std::vector<float> weights);

  std::size_t size() const noexcept { return n_; }
  WeightPrecision precision() const noexcept;
  double weight(std::size_t i, std::size_t j) const;
  std::span<const double> degrees() const noexcept { return degrees_; }

  /// out = W * x
  void multiply(std::span<const double> x, std::span<double> out) const;

  /// Row-major copy of W in double precision.
  std::vector<double> to_dense() const;

  /// Degrees recomputed from W with the same summation order used on
  /// construction.
  std::vector<double> recompute_degrees() const;

 private:
  void compute_degrees();

  std::size_t n_ = 0;
  std::variant<std::vector<float>, std::vector<double>> weights_;
  std::vector<double> degrees_;
};

/// x.y / (|x| |y|). Throws DegenerateFeature if either vector has zero norm.
double cosine_similarity(std::span<const float> x, std::span<const float> y);

/// alpha * cos(app_i, app_j) + (1 - alpha) * cos(flow_i, flow_j). A term whose
/// coefficient is zero is never evaluated.
double combined_similarity(std::span<const float> app_i, std::span<const float> app_j,
                           std::span<const float> flow_i, std::span<const float> flow_j, double alpha);

struct GraphBuildReport {
  std::size_t degenerate_appearance = 0;  // zero-norm appearance patches
  std::size_t degenerate_flow = 0;        // zero-norm flow patches
};

/// Thresholded fully connected graph over the patches of one frame:
/// w_ij = 1 if combined similarity >= tau, epsilon otherwise. Patches with a
/// zero-norm feature (in a term with nonzero coefficient) only receive
/// epsilon edges; they are counted in `report` instead of aborting.
AffinityGraph build_graph(const FeatureGrid& appearance, const FeatureGrid& flow,
                          const AffinityConfig& cfg, GraphBuildReport* report = nullptr);

}  // namespace flowcut
