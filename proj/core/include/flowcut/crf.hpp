#pragma once

#include <cstddef>
#include <vector>

#include "flowcut/image_io.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

enum class CrfBackend {
  automatic,    // exact up to exact_max_pixels, lattice approximation above
  exact,        // O(N^2) pairwise sums
  approximate,  // permutohedral lattice (appearance) + separable blur (smoothness)
};

/// Fully connected two-label CRF with Potts compatibility. The pairwise
/// kernel is
///   w_appearance * exp(-|p_i - p_j|^2 / 2 theta_alpha^2 - |I_i - I_j|^2 / 2 theta_beta^2)
/// + w_smoothness * exp(-|p_i - p_j|^2 / 2 theta_gamma^2)
/// and unaries come from the input mask: P(fg) = unary_confidence on mask
/// pixels, 1 - unary_confidence elsewhere.
struct CrfParams {
  std::size_t iterations = 10;
  double w_appearance = 10.0;
  double w_smoothness = 3.0;
  double theta_alpha = 60.0;  // px
  double theta_beta = 13.0;   // intensity levels
  double theta_gamma = 3.0;   // px
  double unary_confidence = 0.9;
  CrfBackend backend = CrfBackend::automatic;
  std::size_t exact_max_pixels = 32 * 32;  // exact is O(N^2) per iteration

  /// Throws ArgumentError: iterations >= 1, weights >= 0, stddevs > 0,
  /// 0.5 < unary_confidence < 1.
  void validate() const;
};

/// Foreground marginals after `params.iterations` synchronous mean-field
/// updates, starting from the unary-only distribution.
std::vector<double> crf_marginals(const PixelMask& mask, const RgbImage& image, const CrfParams& params);

/// Argmax of the marginals. Pixels whose marginals tie keep the input label;
/// all-foreground and all-background masks are returned unchanged.
PixelMask crf_refine(const PixelMask& mask, const RgbImage& image, const CrfParams& params);

namespace detail {

/// Sums sum_{j != i} k(i, j) * values[j] for the weighted CRF kernel, plus the
/// same sum with values == 1 in `ones_out`. Exposed for testing the backends.
void crf_messages(const RgbImage& image, const CrfParams& params, bool approximate,
                  const std::vector<double>& values, std::vector<double>& out, std::vector<double>& ones_out);

}  // namespace detail

}  // namespace flowcut
