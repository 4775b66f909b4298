#pragma once

// Bootstrapped self-training with a per-patch linear probe. Each round trains
// a fresh probe on the previous round's masks (round 0 masks come from the
// graph cut) and predicts the next round's masks.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcut/manifest.hpp"
#include "flowcut/metrics.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

constexpr double kBceClamp = 1e-7;

struct LinearProbe {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Mean of -[t ln p + (1 - t) ln(1 - p)] with p clamped to [clamp, 1 - clamp].
double bce_loss(std::span<const double> pred, std::span<const std::uint8_t> target, double clamp = kBceClamp);

double sigmoid(double x);

/// sigmoid(w . x + b) for every patch.
std::vector<double> probe_predict(const LinearProbe& probe, const FeatureGrid& features);

/// One training frame: patch features plus the patch-level target.
struct TrainingExample {
  FeatureGrid features;
  std::vector<std::uint8_t> target;
};

struct ProbeObjective {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// Mean clamped BCE over every patch of every example and its exact gradient
/// (zero contribution where the prediction is clamped).
ProbeObjective probe_objective(const LinearProbe& probe, std::span<const TrainingExample> data,
                               double clamp = kBceClamp);

enum class ProbeInit { zeros, seeded_normal };

struct ProbeTrainConfig {
  double lr = 0.1;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  ProbeInit init = ProbeInit::zeros;
  double init_stddev = 0.01;
};

/// Initial parameters for round `round`; depend only on (seed ^ round, init).
LinearProbe init_probe(std::size_t channels, const ProbeTrainConfig& cfg, std::size_t round);

struct TrainResult {
  LinearProbe probe;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Full-batch gradient descent from `start`. Returns the lowest-loss iterate,
/// so final_loss <= initial_loss. Throws NumericalError on a non-finite loss.
TrainResult train_probe(std::span<const TrainingExample> data, const ProbeTrainConfig& cfg, LinearProbe start);

/// Convenience overload starting from init_probe(channels, cfg, round).
TrainResult train_probe(std::span<const TrainingExample> data, const ProbeTrainConfig& cfg, std::size_t round = 0);

/// Unit-L2 rows (zero rows stay zero).
FeatureGrid normalize_patches(const FeatureGrid& grid);

/// Pixelwise majority of an odd number (>= 3) of equally sized masks.
PixelMask ensemble_vote(std::span<const PixelMask> masks);

struct SelfTrainConfig {
  std::size_t rounds = 3;
  ProbeTrainConfig probe;
  bool resume = false;          // warm-start from the previous probe (ablation arm)
  bool external = false;        // hand training to an out-of-process trainer
  bool normalize_features = true;
  double early_stop_fraction = 0.0;  // stop when < this fraction of pixels change; 0 disables
  std::string config_hash;           // recorded in probe.json
};

/// Frame key "seq/frame" -> mask file.
using MaskManifest = std::map<std::string, std::filesystem::path>;

struct RoundState {
  std::size_t round = 0;
  MaskManifest pseudo_gt;
  std::optional<LinearProbe> probe;
  std::optional<EvalReport> metrics;
  std::uint64_t seed = 0;
  double changed_fraction = 1.0;  // pixels that differ from the previous round
};

/// <run_dir>/round_<t>
std::filesystem::path round_directory(const std::filesystem::path& run_dir, std::size_t round);

/// Loads appearance features for every manifest frame (normalised if asked)
/// and pairs them with patch-level targets from the pseudo-GT masks.
std::vector<TrainingExample> load_training_set(const DatasetManifest& manifest, const MaskManifest& pseudo_gt,
                                               bool normalize_features);

/// Evaluates a mask manifest against the dataset's ground truth, or nullopt
/// when no frame has ground truth.
std::optional<EvalReport> evaluate_masks(const DatasetManifest& manifest, const MaskManifest& masks);

/// Trains a fresh probe on state.pseudo_gt, writes round t+1 masks, probe.json
/// and report.json under run_dir/round_<t+1>, and returns the new state.
/// Throws RoundError if a pseudo-GT mask is missing.
RoundState run_round(const RoundState& state, const DatasetManifest& manifest, const SelfTrainConfig& cfg,
                     const std::filesystem::path& run_dir);

/// Predicted masks of `probe` for every manifest frame, keyed "seq/frame".
std::map<std::string, PixelMask> predict_masks(const LinearProbe& probe, const DatasetManifest& manifest,
                                               bool normalize_features);

std::string probe_to_json(const LinearProbe& probe, std::uint64_t seed, const std::string& config_hash);
LinearProbe probe_from_json(const std::string& text);

/// Fraction of pixels that differ between two mask manifests over shared keys.
double changed_fraction(const MaskManifest& previous, const MaskManifest& current);

// --- out-of-process trainer exchange -------------------------------------
//
// round_dir/exchange.json     request: frames, mask sizes, pseudo-GT paths
// round_dir/pseudo_gt/...     training targets (copies of the previous round)
// round_dir/predictions/...   written by the external trainer
// round_dir/masks/...         adopted predictions

/// Writes the exchange request and copies pseudo-GT masks into round_dir.
void prepare_exchange(const std::filesystem::path& round_dir, const MaskManifest& pseudo_gt);

/// Validates round_dir/predictions against the request (binary, same size as
/// the pseudo-GT) and adopts them into round_dir/masks. Throws ExchangeError
/// naming every missing or invalid frame.
MaskManifest external_trainer_exchange(const std::filesystem::path& round_dir);

}  // namespace flowcut
