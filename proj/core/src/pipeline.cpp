#include "flowcut/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "flowcut/affinity.hpp"
#include "flowcut/crf.hpp"
#include "flowcut/errors.hpp"
#include "flowcut/flowviz.hpp"
#include "flowcut/image_io.hpp"
#include "flowcut/maskpipe.hpp"
#include "flowcut/parallel.hpp"
#include "flowcut/selftrain.hpp"
#include "flowcut/spectral.hpp"

namespace flowcut {

namespace fs = std::filesystem;

namespace {

struct FrameRef {
  std::string sequence;
  std::string frame;
};

std::vector<FrameRef> all_frames(const DatasetManifest& manifest) {
  std::vector<FrameRef> out;
  for (const auto& seq : manifest.sequences) {
    for (const auto& f : seq.frames) out.push_back({seq.id, f.id});
  }
  return out;
}

std::string outcome_line(const FrameOutcome& o) {
  nlohmann::ordered_json j;
  j["sequence"] = o.sequence;
  j["frame"] = o.frame;
  j["status"] = o.ok ? "ok" : "error";
  if (o.ok) {
    j["ncut"] = o.ncut;
    j["eigenvalue"] = o.eigenvalue;
    j["matvecs"] = o.matvecs;
    j["degenerate"] = o.degenerate;
    j["corner_swap"] = o.swapped;
    j["foreground_fraction"] = o.foreground_fraction;
    j["degenerate_patches"] = o.degenerate_patches;
  } else {
    j["error"] = o.error;
  }
  return j.dump();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Uses <dir>/masks when present so run and round directories can be passed
// directly.
fs::path mask_root(const fs::path& dir) {
  if (fs::is_directory(dir / "masks")) return dir / "masks";
  return dir;
}

std::string join_keys(const std::vector<std::string>& keys, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < keys.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += keys[i];
  }
  if (keys.size() > limit) out += ", ... (" + std::to_string(keys.size()) + " total)";
  return out;
}

}  // namespace

PixelMask segment_frame(const DatasetManifest& manifest, const std::string& seq, const std::string& frame,
                        const RunConfig& cfg, FrameOutcome* outcome) {
  const auto app = load_frame_features(manifest, seq, frame, FeatureKind::appearance);
  const auto flow = load_frame_features(manifest, seq, frame, FeatureKind::flow);
  if (app.rows != flow.rows || app.cols != flow.cols) {
    throw ShapeError("appearance and flow grids differ in shape");
  }

  GraphBuildReport report;
  const auto graph = build_graph(app, flow, cfg.affinity, &report);
  const GridShape grid{app.rows, app.cols};
  const auto cut = graph_cut(graph, grid, cfg.eigen, cfg.corner_block);
  auto mask = patch_to_pixel(cut.decision.foreground, grid, app.patch_size, app.image_height, app.image_width);

  if (cfg.use_crf) {
    const auto image_path = manifest.frame_image_path(seq, frame);
    if (!image_path) throw ArgumentError("no frame image for CRF refinement (use --no-crf to skip)");
    const auto image = read_rgb_image(*image_path);
    if (image.height != mask.height || image.width != mask.width) {
      throw ShapeError("frame image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                       " but the mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    mask = crf_refine(mask, image, cfg.crf);
  }

  if (outcome) {
    outcome->ok = true;
    outcome->ncut = cut.ncut;
    outcome->eigenvalue = cut.eigenpair.eigenvalue;
    outcome->matvecs = cut.eigenpair.matvecs;
    outcome->degenerate = cut.partition.degenerate;
    outcome->swapped = cut.decision.swapped;
    outcome->foreground_fraction =
        mask.data.empty() ? 0.0 : static_cast<double>(mask.area()) / static_cast<double>(mask.data.size());
    outcome->degenerate_patches = report.degenerate_appearance + report.degenerate_flow;
  }
  return mask;
}

std::vector<FrameOutcome> segment_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                          const fs::path& mask_dir, std::ostream* log) {
  const auto frames = all_frames(manifest);
  std::vector<FrameOutcome> outcomes(frames.size());
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    auto& o = outcomes[i];
    o.sequence = frames[i].sequence;
    o.frame = frames[i].frame;
    try {
      const auto mask = segment_frame(manifest, o.sequence, o.frame, cfg, &o);
      write_mask_array(mask_dir / o.sequence / (o.frame + ".npy"), mask);
    } catch (const std::exception& e) {
      o.ok = false;
      o.error = e.what();
    }
  });
  if (log) {
    for (const auto& o : outcomes) *log << outcome_line(o) << '\n';
  }
  return outcomes;
}

int cmd_segment(const RunConfig& cfg, std::ostream& summary) {
  cfg.validate();
  const auto manifest = load_manifest(cfg.dataset_root);
  fs::create_directories(cfg.output_root);
  write_config_snapshot(cfg, cfg.output_root);

  std::ofstream log(cfg.output_root / "log.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot write " + (cfg.output_root / "log.jsonl").string());
  const auto outcomes = segment_dataset(manifest, cfg, cfg.output_root / "masks", &log);

  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++failed;
      summary << "failed " << o.sequence << "/" << o.frame << ": " << o.error << '\n';
    }
  }
  summary << "segmented " << outcomes.size() - failed << "/" << outcomes.size() << " frames into "
          << (cfg.output_root / "masks").string() << '\n';
  return failed ? 1 : 0;
}

EvalReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, AveragingMode mode) {
  if (!fs::is_directory(gt_dir)) throw ArgumentError("ground-truth directory " + gt_dir.string() + " not found");
  const auto gt = list_mask_tree(gt_dir);
  if (gt.empty()) throw ArgumentError("no ground-truth masks under " + gt_dir.string());
  const auto pred = fs::is_directory(pred_dir) ? list_mask_tree(mask_root(pred_dir))
                                               : std::map<std::string, fs::path>{};

  std::vector<std::string> missing;
  for (const auto& [key, path] : gt) {
    if (!pred.count(key)) missing.push_back(key);
  }
  if (!missing.empty()) {
    throw ArgumentError("missing predictions for " + std::to_string(missing.size()) +
                        " frame(s): " + join_keys(missing));
  }

  std::vector<FrameScore> scores;
  for (const auto& [key, path] : gt) {
    const auto slash = key.find('/');
    try {
      scores.push_back(score_frame(key.substr(0, slash), key.substr(slash + 1), read_mask_file(pred.at(key)),
                                   read_mask_file(path)));
    } catch (const Error& e) {
      throw ArgumentError("frame " + key + ": " + e.what());
    }
  }
  return aggregate(scores, mode);
}

int cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, AveragingMode mode, std::ostream& out,
                 const std::optional<fs::path>& report_path) {
  const auto json = report_to_json(evaluate_directories(pred_dir, gt_dir, mode));
  out << json << '\n';
  if (report_path) write_text(*report_path, json + "\n");
  return 0;
}

int cmd_selftrain(const RunConfig& cfg_in, std::ostream& summary) {
  cfg_in.validate();
  RunConfig cfg = cfg_in;
  cfg.selftrain.config_hash = config_hash(cfg_in);
  cfg.selftrain.probe.seed = cfg.seed;

  const auto manifest = load_manifest(cfg.dataset_root);
  const auto run_dir = cfg.output_root / "runs" / cfg.run_name;
  fs::create_directories(run_dir);
  write_config_snapshot(cfg_in, run_dir);

  const auto round0 = round_directory(run_dir, 0);
  RoundState state;
  state.seed = cfg.seed;
  std::size_t failed = 0;

  if (cfg.initial_masks) {
    const auto supplied = list_mask_tree(*cfg.initial_masks);
    std::vector<std::string> missing;
    for (const auto& f : all_frames(manifest)) {
      const auto key = f.sequence + "/" + f.frame;
      auto it = supplied.find(key);
      if (it == supplied.end()) {
        missing.push_back(key);
        continue;
      }
      const auto dst = round0 / "masks" / (key + ".npy");
      write_mask_array(dst, read_mask_file(it->second));
      state.pseudo_gt.emplace(key, dst);
    }
    if (!missing.empty()) {
      throw RoundError("initial masks missing for " + std::to_string(missing.size()) +
                       " frame(s): " + join_keys(missing));
    }
  } else {
    fs::create_directories(round0);
    std::ofstream log(round0 / "log.jsonl", std::ios::trunc);
    for (const auto& o : segment_dataset(manifest, cfg, round0 / "masks", &log)) {
      if (o.ok) {
        state.pseudo_gt.emplace(o.sequence + "/" + o.frame, round0 / "masks" / o.sequence / (o.frame + ".npy"));
      } else {
        ++failed;
        summary << "round 0: failed " << o.sequence << "/" << o.frame << ": " << o.error << '\n';
      }
    }
  }

  state.metrics = evaluate_masks(manifest, state.pseudo_gt);
  if (state.metrics) write_text(round0 / "report.json", report_to_json(*state.metrics) + "\n");
  auto report_round = [&](const RoundState& s) {
    summary << "round " << s.round;
    if (s.metrics) summary << ": J=" << s.metrics->dataset_j << " F=" << s.metrics->dataset_f;
    if (s.round > 0) summary << " changed=" << s.changed_fraction;
    summary << '\n';
  };
  report_round(state);

  if (failed && cfg.selftrain.rounds > 0) {
    summary << "round 0 incomplete; not self-training\n";
    return 1;
  }

  for (std::size_t t = 0; t < cfg.selftrain.rounds; ++t) {
    try {
      state = run_round(state, manifest, cfg.selftrain, run_dir);
    } catch (const Error& e) {
      throw RoundError("round " + std::to_string(t + 1) + ": " + e.what());
    }
    report_round(state);
    if (cfg.selftrain.early_stop_fraction > 0.0 && state.changed_fraction < cfg.selftrain.early_stop_fraction) {
      summary << "early stop after round " << state.round << '\n';
      break;
    }
  }
  return failed ? 1 : 0;
}

int cmd_flow2rgb(const fs::path& in_dir, const fs::path& out_dir, std::optional<double> max_magnitude,
                 std::size_t threads, std::ostream& summary) {
  if (!fs::is_directory(in_dir)) throw ArgumentError("flow directory " + in_dir.string() + " not found");
  if (max_magnitude && !(*max_magnitude > 0.0)) throw ArgumentError("max magnitude must be positive");
  std::vector<fs::path> inputs;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".npy") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());

  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    try {
      auto dst = out_dir / fs::relative(inputs[i], in_dir);
      dst.replace_extension(".png");
      fs::create_directories(dst.parent_path());
      write_png(dst, flow_to_rgb(read_flow_array(inputs[i]), max_magnitude));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::size_t failed = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!errors[i].empty()) {
      ++failed;
      summary << "failed " << inputs[i].string() << ": " << errors[i] << '\n';
    }
  }
  summary << "converted " << inputs.size() - failed << "/" << inputs.size() << " flow fields\n";
  return failed ? 1 : 0;
}

int cmd_ensemble(const std::vector<fs::path>& inputs, const fs::path& out_dir, std::ostream& summary) {
  if (inputs.size() < 3 || inputs.size() % 2 == 0) {
    throw ArgumentError("ensemble needs an odd number (>= 3) of inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<std::map<std::string, fs::path>> trees;
  for (const auto& dir : inputs) {
    if (!fs::is_directory(dir)) throw ArgumentError("ensemble input " + dir.string() + " not found");
    trees.push_back(list_mask_tree(mask_root(dir)));
  }
  std::vector<std::string> mismatched;
  for (std::size_t k = 1; k < trees.size(); ++k) {
    for (const auto& [key, path] : trees[0]) {
      if (!trees[k].count(key)) mismatched.push_back(inputs[k].string() + ": missing " + key);
    }
    for (const auto& [key, path] : trees[k]) {
      if (!trees[0].count(key)) mismatched.push_back(inputs[0].string() + ": missing " + key);
    }
  }
  if (!mismatched.empty()) throw ArgumentError("ensemble inputs disagree: " + join_keys(mismatched));

  for (const auto& [key, path] : trees[0]) {
    std::vector<PixelMask> masks;
    for (const auto& tree : trees) masks.push_back(read_mask_file(tree.at(key)));
    try {
      write_mask_array(out_dir / (key + ".npy"), ensemble_vote(masks));
    } catch (const ArgumentError& e) {
      throw ArgumentError("frame " + key + ": " + e.what());
    }
  }
  summary << "merged " << trees[0].size() << " frames from " << inputs.size() << " inputs into "
          << out_dir.string() << '\n';
  return 0;
}

}  // namespace flowcut
