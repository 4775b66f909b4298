#include "flowcut/manifest.hpp"

#include <algorithm>
#include <fstream>

#include "flowcut/errors.hpp"

namespace flowcut {

namespace fs = std::filesystem;

const char* to_string(AveragingMode mode) {
  return mode == AveragingMode::sequence_average ? "sequence_average" : "frame_average";
}

AveragingMode parse_averaging_mode(const std::string& text) {
  if (text == "sequence_average" || text == "seq" || text == "sequence") {
    return AveragingMode::sequence_average;
  }
  if (text == "frame_average" || text == "frame") return AveragingMode::frame_average;
  throw ArgumentError("unknown averaging mode '" + text + "'");
}

std::size_t DatasetManifest::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames.size();
  return n;
}

std::size_t DatasetManifest::evaluable_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) {
    n += static_cast<std::size_t>(std::count_if(s.frames.begin(), s.frames.end(),
                                                [](const auto& f) { return f.has_ground_truth; }));
  }
  return n;
}

fs::path DatasetManifest::appearance_path(const std::string& seq, const std::string& frame) const {
  return root / "feat_app" / seq / (frame + ".npy");
}

fs::path DatasetManifest::flow_path(const std::string& seq, const std::string& frame) const {
  return root / "feat_flow" / seq / (frame + ".npy");
}

std::optional<fs::path> DatasetManifest::frame_image_path(const std::string& seq,
                                                          const std::string& frame) const {
  for (const char* ext : {".png", ".ppm"}) {
    auto p = root / "frames" / seq / (frame + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

std::optional<fs::path> DatasetManifest::ground_truth_path(const std::string& seq,
                                                           const std::string& frame) const {
  for (const char* ext : {".png", ".npy"}) {
    auto p = root / "gt" / seq / (frame + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key,
                       std::size_t fallback, const fs::path& file) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (!all_digits(it->second)) {
    throw ManifestError(file.string() + ": '" + key + "' must be a non-negative integer");
  }
  return std::stoul(it->second);
}

}  // namespace

std::map<std::string, std::string> parse_key_value_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out[key] = value;
  }
  return out;
}

std::vector<std::string> list_frames(const fs::path& dir, const std::string& extension) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  std::size_t width = 0;
  for (const auto& id : ids) {
    if (!all_digits(id)) continue;
    if (width == 0) width = id.size();
    if (id.size() != width) {
      throw ManifestError(dir.string() + ": numeric frame names must be zero-padded to a common width ('" +
                          id + "')");
    }
  }
  return ids;
}

std::map<std::string, fs::path> list_mask_tree(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> seq_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) seq_dirs.push_back(entry.path());
  }
  for (const auto& seq_dir : seq_dirs) {
    const auto seq = seq_dir.filename().string();
    for (const auto& entry : fs::directory_iterator(seq_dir)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = entry.path().extension();
      if (ext != ".npy" && ext != ".png") continue;
      const auto key = seq + "/" + entry.path().stem().string();
      // .npy wins over .png when both exist
      auto [it, inserted] = out.emplace(key, entry.path());
      if (!inserted && ext == ".npy") it->second = entry.path();
    }
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) throw ManifestError("dataset root " + root.string() + " is not a directory");
  const auto config_path = root / "dataset.toml";
  if (!fs::exists(config_path)) throw ManifestError(root.string() + ": missing dataset.toml");

  DatasetManifest m;
  m.root = root;
  const auto kv = parse_key_value_file(config_path);
  auto mode = kv.find("averaging_mode");
  if (mode == kv.end()) throw ManifestError(config_path.string() + ": missing averaging_mode");
  try {
    m.averaging_mode = parse_averaging_mode(mode->second);
  } catch (const ArgumentError& e) {
    throw ManifestError(config_path.string() + ": " + e.what());
  }
  m.patch_size = parse_size(kv, "patch_size", 8, config_path);
  m.image_height = parse_size(kv, "image_height", 0, config_path);
  m.image_width = parse_size(kv, "image_width", 0, config_path);
  if (m.patch_size == 0) throw ManifestError(config_path.string() + ": patch_size must be positive");

  const auto app_root = root / "feat_app";
  if (!fs::is_directory(app_root)) throw ManifestError(root.string() + ": missing feat_app/");

  std::vector<std::string> seq_ids;
  for (const auto& entry : fs::directory_iterator(app_root)) {
    if (entry.is_directory()) seq_ids.push_back(entry.path().filename().string());
  }
  std::sort(seq_ids.begin(), seq_ids.end());

  for (const auto& seq : seq_ids) {
    SequenceEntry s;
    s.id = seq;
    for (const auto& frame : list_frames(app_root / seq, ".npy")) {
      if (!fs::exists(m.flow_path(seq, frame))) {
        throw ManifestError("frame " + seq + "/" + frame + " has no flow features at " +
                            m.flow_path(seq, frame).string());
      }
      s.frames.push_back({frame, m.ground_truth_path(seq, frame).has_value()});
    }
    if (!s.frames.empty()) m.sequences.push_back(std::move(s));
  }
  if (m.sequences.empty()) throw ManifestError(root.string() + ": no frames found under feat_app/");
  return m;
}

FeatureGrid load_frame_features(const DatasetManifest& manifest, const std::string& seq, const std::string& frame,
                                FeatureKind kind) {
  const auto path = kind == FeatureKind::appearance ? manifest.appearance_path(seq, frame) : manifest.flow_path(seq, frame);
  auto grid = read_feature_grid(path, kind, manifest.patch_size, 0, 0);
  grid.image_height = manifest.image_height ? manifest.image_height : grid.rows * manifest.patch_size;
  grid.image_width = manifest.image_width ? manifest.image_width : grid.cols * manifest.patch_size;
  try {
    grid.validate();
  } catch (const ShapeError& e) {
    throw ShapeError(path.string() + ": " + e.what());
  }
  return grid;
}

}  // namespace flowcut
