#include "flowcut/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/maskpipe.hpp"

namespace flowcut {

namespace {

void require_same_shape(const PixelMask& a, const PixelMask& b) {
  if (!a.same_shape(b) || a.data.size() != b.data.size()) {
    throw ShapeError("mask shapes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

double jaccard(const PixelMask& pred, const PixelMask& gt) {
  require_same_shape(pred, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & gt.data[i];
    uni += pred.data[i] | gt.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double pixel_accuracy(const PixelMask& pred, const PixelMask& gt) {
  require_same_shape(pred, gt);
  if (pred.data.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) same += pred.data[i] == gt.data[i];
  return static_cast<double>(same) / static_cast<double>(pred.data.size());
}

PixelMask mask_boundary(const PixelMask& mask) {
  PixelMask out(mask.height, mask.width, mask.source);
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = (y > 0 && !mask.at(y - 1, x)) || (y + 1 < mask.height && !mask.at(y + 1, x)) ||
                        (x > 0 && !mask.at(y, x - 1)) || (x + 1 < mask.width && !mask.at(y, x + 1));
      out.at(y, x) = edge ? 1 : 0;
    }
  }
  return out;
}

std::size_t default_boundary_tolerance(std::size_t height, std::size_t width) {
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return static_cast<std::size_t>(std::ceil(0.008 * diag));
}

namespace {

// Disk dilation of a binary map with radius r (Euclidean).
PixelMask dilate_disk(const PixelMask& m, std::size_t r) {
  const long R = static_cast<long>(r);
  std::vector<std::pair<long, long>> offsets;
  for (long dy = -R; dy <= R; ++dy) {
    for (long dx = -R; dx <= R; ++dx) {
      if (dy * dy + dx * dx <= R * R) offsets.emplace_back(dy, dx);
    }
  }
  PixelMask out(m.height, m.width, m.source);
  const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      if (!m.data[static_cast<std::size_t>(y * W + x)]) continue;
      for (const auto& [dy, dx] : offsets) {
        const long yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < H && xx >= 0 && xx < W) out.data[static_cast<std::size_t>(yy * W + xx)] = 1;
      }
    }
  }
  return out;
}

}  // namespace

double boundary_f(const PixelMask& pred, const PixelMask& gt, std::size_t tol_px) {
  require_same_shape(pred, gt);
  const auto pb = mask_boundary(pred);
  const auto gb = mask_boundary(gt);
  const auto np = pb.area(), ng = gb.area();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const auto gd = dilate_disk(gb, tol_px);
  const auto pd = dilate_disk(pb, tol_px);
  std::size_t pred_hit = 0, gt_hit = 0;
  for (std::size_t i = 0; i < pb.data.size(); ++i) {
    pred_hit += pb.data[i] & gd.data[i];
    gt_hit += gb.data[i] & pd.data[i];
  }
  const double precision = static_cast<double>(pred_hit) / static_cast<double>(np);
  const double recall = static_cast<double>(gt_hit) / static_cast<double>(ng);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double f_beta(double precision, double recall, double beta_squared) {
  const double denom = beta_squared * precision + recall;
  return denom == 0.0 ? 0.0 : (1.0 + beta_squared) * precision * recall / denom;
}

double max_f_beta(std::span<const double> soft_pred, const PixelMask& gt, double beta_squared) {
  if (soft_pred.size() != gt.data.size()) throw ShapeError("soft prediction and ground truth differ in size");
  // bucket predictions by the highest threshold index they clear
  constexpr int kLevels = 255;
  std::vector<std::size_t> pos(kLevels + 2, 0), neg(kLevels + 2, 0);
  std::size_t total_pos = 0;
  for (std::size_t i = 0; i < soft_pred.size(); ++i) {
    const int level = std::clamp(static_cast<int>(std::floor(soft_pred[i] * 256.0)), 0, kLevels);
    (gt.data[i] ? pos : neg)[static_cast<std::size_t>(level)]++;
    total_pos += gt.data[i];
  }
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  for (int k = kLevels; k >= 1; --k) {
    tp += pos[static_cast<std::size_t>(k)];
    fp += neg[static_cast<std::size_t>(k)];
    if (tp + fp == 0 || total_pos == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    best = std::max(best, f_beta(precision, recall, beta_squared));
  }
  return best;
}

PixelMask merge_masks(std::span<const PixelMask> masks) {
  if (masks.empty()) throw ArgumentError("merge_masks needs at least one mask");
  PixelMask out = masks.front();
  for (const auto& m : masks.subspan(1)) {
    require_same_shape(out, m);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] |= m.data[i];
  }
  return out;
}

FrameScore score_frame(const std::string& sequence, const std::string& frame, const PixelMask& pred,
                       const PixelMask& gt) {
  const auto p = resize_nearest(pred, gt.height, gt.width);
  FrameScore s;
  s.sequence = sequence;
  s.frame = frame;
  s.jaccard = jaccard(p, gt);
  s.boundary_f = boundary_f(p, gt, default_boundary_tolerance(gt.height, gt.width));
  s.accuracy = pixel_accuracy(p, gt);
  std::vector<double> soft(p.data.begin(), p.data.end());
  s.max_f_beta = max_f_beta(soft, gt);
  return s;
}

EvalReport aggregate(std::span<const FrameScore> frames, AveragingMode mode) {
  EvalReport report;
  report.averaging_mode = mode;
  std::map<std::string, SequenceScore> by_seq;
  double j = 0.0, f = 0.0, acc = 0.0, fb = 0.0;
  std::size_t count = 0;
  for (const auto& s : frames) {
    if (!s.has_ground_truth) continue;
    report.per_frame.push_back(s);
    auto& seq = by_seq[s.sequence];
    seq.sequence = s.sequence;
    seq.jaccard += s.jaccard;
    seq.boundary_f += s.boundary_f;
    ++seq.frames;
    j += s.jaccard;
    f += s.boundary_f;
    acc += s.accuracy;
    fb += s.max_f_beta;
    ++count;
  }
  if (count == 0) throw ArgumentError("no frames with ground truth to aggregate");
  for (auto& [name, seq] : by_seq) {
    seq.jaccard /= static_cast<double>(seq.frames);
    seq.boundary_f /= static_cast<double>(seq.frames);
    report.per_sequence.push_back(seq);
  }
  const double n = static_cast<double>(count);
  report.accuracy = acc / n;
  report.max_f_beta = fb / n;
  if (mode == AveragingMode::frame_average) {
    report.dataset_j = j / n;
    report.dataset_f = f / n;
  } else {
    double sj = 0.0, sf = 0.0;
    for (const auto& seq : report.per_sequence) {
      sj += seq.jaccard;
      sf += seq.boundary_f;
    }
    report.dataset_j = sj / static_cast<double>(report.per_sequence.size());
    report.dataset_f = sf / static_cast<double>(report.per_sequence.size());
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["averaging_mode"] = to_string(report.averaging_mode);
  j["dataset_J"] = round4(report.dataset_j);
  j["dataset_F"] = round4(report.dataset_f);
  j["accuracy"] = round4(report.accuracy);
  j["max_f_beta"] = round4(report.max_f_beta);
  auto& seqs = j["per_sequence"] = nlohmann::ordered_json::array();
  for (const auto& s : report.per_sequence) {
    seqs.push_back({{"sequence", s.sequence}, {"J", round4(s.jaccard)}, {"F", round4(s.boundary_f)},
                    {"frames", s.frames}});
  }
  auto& frames = j["per_frame"] = nlohmann::ordered_json::array();
  for (const auto& s : report.per_frame) {
    frames.push_back({{"sequence", s.sequence}, {"frame", s.frame}, {"J", round4(s.jaccard)},
                      {"F", round4(s.boundary_f)}, {"accuracy", round4(s.accuracy)},
                      {"max_f_beta", round4(s.max_f_beta)}});
  }
  return j.dump(2);
}

}  // namespace flowcut
