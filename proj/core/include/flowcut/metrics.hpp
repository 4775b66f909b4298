#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowcut/manifest.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

/// |pred & gt| / |pred | gt|, 1 when both are empty.
double jaccard(const PixelMask& pred, const PixelMask& gt);

/// Fraction of pixels where pred == gt.
double pixel_accuracy(const PixelMask& pred, const PixelMask& gt);

/// Foreground pixels with at least one 4-neighbour in the background. Pixels
/// beyond the image border do not count as background.
PixelMask mask_boundary(const PixelMask& mask);

/// DAVIS-style tolerance: ceil(0.008 * image diagonal).
std::size_t default_boundary_tolerance(std::size_t height, std::size_t width);

/// Boundary F-measure. A boundary pixel is matched when a boundary pixel of
/// the other mask lies within Euclidean distance tol_px. 1 if both
/// boundaries are empty, 0 if exactly one is.
double boundary_f(const PixelMask& pred, const PixelMask& gt, std::size_t tol_px);

/// F_beta = (1 + b2) P R / (b2 P + R); 0 when P + R == 0.
double f_beta(double precision, double recall, double beta_squared = 0.3);

/// Max F_beta over thresholds k/256, k = 1..255, binarising pred >= t.
double max_f_beta(std::span<const double> soft_pred, const PixelMask& gt, double beta_squared = 0.3);

/// Pixelwise union. Throws ArgumentError for an empty list.
PixelMask merge_masks(std::span<const PixelMask> masks);

struct FrameScore {
  std::string sequence;
  std::string frame;
  double jaccard = 0.0;
  double boundary_f = 0.0;
  double accuracy = 0.0;
  double max_f_beta = 0.0;
  bool has_ground_truth = true;
};

struct SequenceScore {
  std::string sequence;
  double jaccard = 0.0;
  double boundary_f = 0.0;
  std::size_t frames = 0;
};

struct EvalReport {
  std::vector<FrameScore> per_frame;
  std::vector<SequenceScore> per_sequence;
  double dataset_j = 0.0;
  double dataset_f = 0.0;
  double accuracy = 0.0;
  double max_f_beta = 0.0;
  AveragingMode averaging_mode = AveragingMode::sequence_average;
};

/// Frames without ground truth are dropped. sequence_average is the mean over
/// sequences of per-sequence means; frame_average the mean over all frames.
/// Throws ArgumentError if no frame carries ground truth.
EvalReport aggregate(std::span<const FrameScore> frames, AveragingMode mode);

/// Scores one predicted frame; pred is nearest-resized to gt when sizes differ.
FrameScore score_frame(const std::string& sequence, const std::string& frame, const PixelMask& pred,
                       const PixelMask& gt);

/// JSON with every score rounded to 4 decimals.
std::string report_to_json(const EvalReport& report);

}  // namespace flowcut
