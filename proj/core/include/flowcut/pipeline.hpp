#pragma once

// Dataset-level commands behind the flowcut tool. Each returns a process exit
// status: 0 ok, 1 partial failure. Configuration problems surface as
// ConfigError before any output is written.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowcut/manifest.hpp"
#include "flowcut/metrics.hpp"
#include "flowcut/run_config.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

struct FrameOutcome {
  std::string sequence;
  std::string frame;
  bool ok = false;
  std::string error;
  double ncut = 0.0;
  double eigenvalue = 0.0;
  std::size_t matvecs = 0;
  bool degenerate = false;
  bool swapped = false;
  double foreground_fraction = 0.0;
  std::size_t degenerate_patches = 0;
};

/// Graph cut (plus CRF when cfg.use_crf) for one frame. Fills `outcome`
/// with solver diagnostics when given.
PixelMask segment_frame(const DatasetManifest& manifest, const std::string& seq, const std::string& frame,
                        const RunConfig& cfg, FrameOutcome* outcome = nullptr);

/// Segments every manifest frame into <mask_dir>/<seq>/<frame>.npy. Frame
/// failures are recorded and do not stop the run. One JSON line per frame,
/// in manifest order, goes to `log` when given.
std::vector<FrameOutcome> segment_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                          const std::filesystem::path& mask_dir, std::ostream* log = nullptr);

/// <output_root>/{config.json, log.jsonl, masks/...}
int cmd_segment(const RunConfig& cfg, std::ostream& summary);

/// Scores every ground-truth frame under gt_dir against pred_dir. Throws
/// ArgumentError listing ground-truth frames without a prediction.
EvalReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                AveragingMode mode);

/// Writes the report JSON to `out` (and to `report_path` when given).
int cmd_evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir, AveragingMode mode,
                 std::ostream& out, const std::optional<std::filesystem::path>& report_path = std::nullopt);

/// <output_root>/runs/<run_name>/round_<t>/... Round 0 holds the graph-cut
/// (or supplied) masks; rounds 1..N the self-trained predictions.
int cmd_selftrain(const RunConfig& cfg, std::ostream& summary);

/// Converts every (H,W,2) flow array under in_dir to a PNG at the same
/// relative path under out_dir.
int cmd_flow2rgb(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                 std::optional<double> max_magnitude, std::size_t threads, std::ostream& summary);

/// Pixelwise majority over mask trees. An input directory containing a
/// masks/ subdirectory (a round or segment output) uses that subdirectory.
/// Throws ArgumentError unless every input holds the same frames.
int cmd_ensemble(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
                 std::ostream& summary);

}  // namespace flowcut
