#include "flowcut/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/image_io.hpp"
#include "flowcut/maskpipe.hpp"

namespace flowcut {

namespace fs = std::filesystem;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_loss(std::span<const double> pred, std::span<const std::uint8_t> target, double clamp) {
  if (pred.size() != target.size()) throw ShapeError("bce_loss: prediction and target sizes differ");
  if (pred.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], clamp, 1.0 - clamp);
    total -= target[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(pred.size());
}

std::vector<double> probe_predict(const LinearProbe& probe, const FeatureGrid& features) {
  if (features.channels != probe.weights.size()) {
    throw ShapeError("probe has " + std::to_string(probe.weights.size()) + " weights but features have " +
                     std::to_string(features.channels) + " channels");
  }
  std::vector<double> out(features.patches());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto x = features.patch(i);
    double z = probe.bias;
    for (std::size_t k = 0; k < x.size(); ++k) z += probe.weights[k] * x[k];
    out[i] = sigmoid(z);
  }
  return out;
}

ProbeObjective probe_objective(const LinearProbe& probe, std::span<const TrainingExample> data, double clamp) {
  ProbeObjective obj;
  obj.grad_weights.assign(probe.weights.size(), 0.0);
  std::size_t count = 0;
  for (const auto& ex : data) {
    if (ex.target.size() != ex.features.patches()) throw ShapeError("training target does not match its grid");
    const auto pred = probe_predict(probe, ex.features);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double p = pred[i];
      const double pc = std::clamp(p, clamp, 1.0 - clamp);
      obj.loss -= ex.target[i] ? std::log(pc) : std::log(1.0 - pc);
      if (p == pc) {
        const double g = p - static_cast<double>(ex.target[i]);
        const auto x = ex.features.patch(i);
        for (std::size_t k = 0; k < x.size(); ++k) obj.grad_weights[k] += g * x[k];
        obj.grad_bias += g;
      }
    }
    count += pred.size();
  }
  if (count == 0) throw ArgumentError("probe objective over an empty training set");
  const double inv = 1.0 / static_cast<double>(count);
  obj.loss *= inv;
  for (auto& g : obj.grad_weights) g *= inv;
  obj.grad_bias *= inv;
  return obj;
}

LinearProbe init_probe(std::size_t channels, const ProbeTrainConfig& cfg, std::size_t round) {
  LinearProbe probe;
  probe.weights.assign(channels, 0.0);
  if (cfg.init == ProbeInit::zeros) return probe;
  std::mt19937_64 gen(cfg.seed ^ static_cast<std::uint64_t>(round));
  auto uniform = [&] { return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53; };
  auto normal = [&] {
    return std::sqrt(-2.0 * std::log(uniform())) * std::cos(2.0 * std::numbers::pi * uniform());
  };
  for (auto& w : probe.weights) w = cfg.init_stddev * normal();
  probe.bias = cfg.init_stddev * normal();
  return probe;
}

TrainResult train_probe(std::span<const TrainingExample> data, const ProbeTrainConfig& cfg, LinearProbe start) {
  if (data.empty()) throw ArgumentError("train_probe needs at least one example");
  if (!(cfg.lr >= 0.0)) throw ArgumentError("learning rate must be nonnegative");
  TrainResult result;
  LinearProbe probe = std::move(start);
  auto obj = probe_objective(probe, data);
  if (!std::isfinite(obj.loss)) throw NumericalError("non-finite initial training loss");
  result.initial_loss = obj.loss;
  result.final_loss = obj.loss;
  result.probe = probe;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t k = 0; k < probe.weights.size(); ++k) probe.weights[k] -= cfg.lr * obj.grad_weights[k];
    probe.bias -= cfg.lr * obj.grad_bias;
    obj = probe_objective(probe, data);
    if (!std::isfinite(obj.loss)) {
      throw NumericalError("non-finite training loss at iteration " + std::to_string(it + 1));
    }
    if (obj.loss < result.final_loss) {
      result.final_loss = obj.loss;
      result.probe = probe;
    }
  }
  return result;
}

TrainResult train_probe(std::span<const TrainingExample> data, const ProbeTrainConfig& cfg, std::size_t round) {
  if (data.empty()) throw ArgumentError("train_probe needs at least one example");
  return train_probe(data, cfg, init_probe(data.front().features.channels, cfg, round));
}

FeatureGrid normalize_patches(const FeatureGrid& grid) {
  FeatureGrid out = grid;
  for (std::size_t i = 0; i < out.patches(); ++i) {
    auto p = out.patch(i);
    double norm2 = 0.0;
    for (float v : p) norm2 += static_cast<double>(v) * v;
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : p) v = static_cast<float>(v * inv);
  }
  return out;
}

PixelMask ensemble_vote(std::span<const PixelMask> masks) {
  if (masks.size() < 3 || masks.size() % 2 == 0) {
    throw ArgumentError("ensemble_vote needs an odd number of masks, at least 3 (got " +
                        std::to_string(masks.size()) + ")");
  }
  PixelMask out(masks.front().height, masks.front().width, MaskSource::ensemble);
  std::vector<std::size_t> votes(out.data.size(), 0);
  for (const auto& m : masks) {
    if (!m.same_shape(out) || m.data.size() != out.data.size()) throw ShapeError("ensemble masks differ in size");
    for (std::size_t i = 0; i < votes.size(); ++i) votes[i] += m.data[i];
  }
  for (std::size_t i = 0; i < votes.size(); ++i) out.data[i] = 2 * votes[i] > masks.size() ? 1 : 0;
  return out;
}

fs::path round_directory(const fs::path& run_dir, std::size_t round) {
  return run_dir / ("round_" + std::to_string(round));
}

namespace {

std::string frame_key(const std::string& seq, const std::string& frame) { return seq + "/" + frame; }

PixelMask load_mask_at(const fs::path& path, std::size_t height, std::size_t width) {
  return resize_nearest(read_mask_file(path), height, width);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<TrainingExample> load_training_set(const DatasetManifest& manifest, const MaskManifest& pseudo_gt,
                                               bool normalize_features) {
  std::vector<TrainingExample> data;
  std::vector<std::string> missing;
  for (const auto& seq : manifest.sequences) {
    for (const auto& f : seq.frames) {
      const auto key = frame_key(seq.id, f.id);
      auto it = pseudo_gt.find(key);
      if (it == pseudo_gt.end() || !fs::exists(it->second)) {
        missing.push_back(key);
        continue;
      }
      auto grid = load_frame_features(manifest, seq.id, f.id, FeatureKind::appearance);
      const auto mask = load_mask_at(it->second, grid.image_height, grid.image_width);
      TrainingExample ex;
      ex.target = block_majority(mask, {grid.rows, grid.cols}, grid.patch_size);
      ex.features = normalize_features ? normalize_patches(grid) : std::move(grid);
      data.push_back(std::move(ex));
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += " " + m;
    throw RoundError("missing pseudo-GT masks for:" + list);
  }
  return data;
}

std::map<std::string, PixelMask> predict_masks(const LinearProbe& probe, const DatasetManifest& manifest,
                                               bool normalize_features) {
  std::map<std::string, PixelMask> out;
  for (const auto& seq : manifest.sequences) {
    for (const auto& f : seq.frames) {
      auto grid = load_frame_features(manifest, seq.id, f.id, FeatureKind::appearance);
      if (normalize_features) grid = normalize_patches(grid);
      const auto soft = probe_predict(probe, grid);
      std::vector<std::uint8_t> labels(soft.size());
      std::transform(soft.begin(), soft.end(), labels.begin(), [](double p) { return p >= 0.5 ? 1 : 0; });
      out.emplace(frame_key(seq.id, f.id), patch_to_pixel(labels, {grid.rows, grid.cols}, grid.patch_size,
                                                          grid.image_height, grid.image_width, MaskSource::probe));
    }
  }
  return out;
}

std::optional<EvalReport> evaluate_masks(const DatasetManifest& manifest, const MaskManifest& masks) {
  std::vector<FrameScore> scores;
  for (const auto& seq : manifest.sequences) {
    for (const auto& f : seq.frames) {
      if (!f.has_ground_truth) continue;
      auto it = masks.find(frame_key(seq.id, f.id));
      if (it == masks.end()) continue;
      const auto gt = read_mask_file(*manifest.ground_truth_path(seq.id, f.id));
      scores.push_back(score_frame(seq.id, f.id, read_mask_file(it->second), gt));
    }
  }
  if (scores.empty()) return std::nullopt;
  return aggregate(scores, manifest.averaging_mode);
}

double changed_fraction(const MaskManifest& previous, const MaskManifest& current) {
  std::size_t changed = 0, total = 0;
  for (const auto& [key, path] : current) {
    auto it = previous.find(key);
    if (it == previous.end()) continue;
    const auto a = read_mask_file(path);
    const auto b = resize_nearest(read_mask_file(it->second), a.height, a.width);
    for (std::size_t i = 0; i < a.data.size(); ++i) changed += a.data[i] != b.data[i];
    total += a.data.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(total);
}

std::string probe_to_json(const LinearProbe& probe, std::uint64_t seed, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["weights"] = probe.weights;
  j["bias"] = probe.bias;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j.dump(2);
}

LinearProbe probe_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LinearProbe probe;
    probe.weights = j.at("weights").get<std::vector<double>>();
    probe.bias = j.at("bias").get<double>();
    return probe;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed probe JSON: ") + e.what());
  }
}

RoundState run_round(const RoundState& state, const DatasetManifest& manifest, const SelfTrainConfig& cfg,
                     const fs::path& run_dir) {
  const std::size_t t = state.round + 1;
  const auto dir = round_directory(run_dir, t);
  fs::create_directories(dir);

  RoundState next;
  next.round = t;
  next.seed = state.seed;

  if (cfg.external) {
    prepare_exchange(dir, state.pseudo_gt);
    next.pseudo_gt = external_trainer_exchange(dir);
  } else {
    const auto data = load_training_set(manifest, state.pseudo_gt, cfg.normalize_features);
    auto probe_cfg = cfg.probe;
    probe_cfg.seed = state.seed;
    LinearProbe start = cfg.resume && state.probe ? *state.probe
                                                  : init_probe(data.front().features.channels, probe_cfg, t);
    auto trained = train_probe(data, probe_cfg, std::move(start));
    for (const auto& [key, mask] : predict_masks(trained.probe, manifest, cfg.normalize_features)) {
      const auto path = dir / "masks" / (key + ".npy");
      write_mask_array(path, mask);
      next.pseudo_gt.emplace(key, path);
    }
    write_text(dir / "probe.json", probe_to_json(trained.probe, state.seed, cfg.config_hash));
    next.probe = std::move(trained.probe);
  }

  next.metrics = evaluate_masks(manifest, next.pseudo_gt);
  if (next.metrics) write_text(dir / "report.json", report_to_json(*next.metrics));
  next.changed_fraction = changed_fraction(state.pseudo_gt, next.pseudo_gt);
  return next;
}

void prepare_exchange(const fs::path& round_dir, const MaskManifest& pseudo_gt) {
  if (pseudo_gt.empty()) throw RoundError("no pseudo-GT masks to hand to the external trainer");
  nlohmann::ordered_json request;
  request["frames"] = nlohmann::ordered_json::array();
  std::vector<std::string> missing;
  for (const auto& [key, path] : pseudo_gt) {
    if (!fs::exists(path)) {
      missing.push_back(key);
      continue;
    }
    const auto mask = read_mask_file(path);
    const auto target = fs::path("pseudo_gt") / (key + ".npy");
    write_mask_array(round_dir / target, mask);
    request["frames"].push_back({{"key", key},
                                 {"height", mask.height},
                                 {"width", mask.width},
                                 {"pseudo_gt", target.generic_string()},
                                 {"prediction", (fs::path("predictions") / (key + ".npy")).generic_string()}});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += " " + m;
    throw RoundError("missing pseudo-GT masks for:" + list);
  }
  write_text(round_dir / "exchange.json", request.dump(2));
}

MaskManifest external_trainer_exchange(const fs::path& round_dir) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(read_text(round_dir / "exchange.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ExchangeError(std::string("malformed exchange request: ") + e.what(), {});
  } catch (const Error& e) {
    throw ExchangeError(e.what(), {});
  }

  std::vector<std::string> offenders;
  std::vector<std::pair<std::string, PixelMask>> adopted;
  for (const auto& frame : request.at("frames")) {
    const auto key = frame.at("key").get<std::string>();
    const auto height = frame.at("height").get<std::size_t>();
    const auto width = frame.at("width").get<std::size_t>();
    auto path = round_dir / frame.at("prediction").get<std::string>();
    if (!fs::exists(path)) {
      auto png = path;
      png.replace_extension(".png");
      if (!fs::exists(png)) {
        offenders.push_back(key + " (missing)");
        continue;
      }
      path = png;
    }
    try {
      auto mask = read_mask_file(path);
      if (mask.height != height || mask.width != width) {
        offenders.push_back(key + " (expected " + std::to_string(height) + "x" + std::to_string(width) + ", got " +
                            std::to_string(mask.height) + "x" + std::to_string(mask.width) + ")");
        continue;
      }
      mask.source = MaskSource::external;
      adopted.emplace_back(key, std::move(mask));
    } catch (const Error& e) {
      offenders.push_back(key + " (" + e.what() + ")");
    }
  }
  if (!offenders.empty()) throw ExchangeError("external predictions rejected", offenders);

  MaskManifest out;
  for (const auto& [key, mask] : adopted) {
    const auto path = round_dir / "masks" / (key + ".npy");
    write_mask_array(path, mask);
    out.emplace(key, path);
  }
  return out;
}

}  // namespace flowcut
