#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowcut/tensor_io.hpp"

namespace flowcut {

enum class AveragingMode { sequence_average, frame_average };

const char* to_string(AveragingMode mode);
/// Accepts "sequence_average"/"seq"/"sequence" and "frame_average"/"frame".
AveragingMode parse_averaging_mode(const std::string& text);

struct FrameEntry {
  std::string id;
  bool has_ground_truth = false;
};

struct SequenceEntry {
  std::string id;
  std::vector<FrameEntry> frames;
};

/// A dataset directory:
///
///   <dataset>/dataset.toml
///   <dataset>/frames/<seq>/<frame>.{png,ppm}      (optional, CRF only)
///   <dataset>/feat_app/<seq>/<frame>.npy
///   <dataset>/feat_flow/<seq>/<frame>.npy
///   <dataset>/gt/<seq>/<frame>.{png,npy}          (optional, sparse)
///
/// dataset.toml is a flat `key = value` file; recognised keys are
/// averaging_mode, patch_size, image_height, image_width.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SequenceEntry> sequences;
  AveragingMode averaging_mode = AveragingMode::sequence_average;
  std::size_t patch_size = 8;
  std::size_t image_height = 0;
  std::size_t image_width = 0;

  std::size_t frame_count() const;
  std::size_t evaluable_count() const;

  std::filesystem::path appearance_path(const std::string& seq, const std::string& frame) const;
  std::filesystem::path flow_path(const std::string& seq, const std::string& frame) const;
  /// First existing frame image (.png then .ppm), or nullopt.
  std::optional<std::filesystem::path> frame_image_path(const std::string& seq,
                                                        const std::string& frame) const;
  std::optional<std::filesystem::path> ground_truth_path(const std::string& seq,
                                                         const std::string& frame) const;
};

DatasetManifest load_manifest(const std::filesystem::path& root);

/// Reads one frame's appearance or flow grid with the dataset geometry
/// attached. When the dataset config omits image_height/image_width the image
/// is taken to be exactly rows*patch_size x cols*patch_size.
FeatureGrid load_frame_features(const DatasetManifest& manifest, const std::string& seq, const std::string& frame,
                                FeatureKind kind);

/// Parses the flat key/value config. Values may be bare or double-quoted;
/// '#' starts a comment.
std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& path);

/// Sorted frame ids under `dir` with the given extension. Numeric names must
/// be zero-padded to a common width so that lexicographic order is temporal.
std::vector<std::string> list_frames(const std::filesystem::path& dir, const std::string& extension);

/// Finds `<dir>/<seq>/<frame>.{npy,png}` mask files, keyed by "seq/frame".
std::map<std::string, std::filesystem::path> list_mask_tree(const std::filesystem::path& dir);

}  // namespace flowcut
