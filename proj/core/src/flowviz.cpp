#include "flowcut/flowviz.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flowcut/errors.hpp"

namespace flowcut {

std::vector<std::pair<std::string, std::string>> pair_frames(const std::vector<std::string>& frame_ids) {
  if (frame_ids.size() < 2) throw PairingError("flow pairing needs at least two frames");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(frame_ids.size());
  for (std::size_t i = 0; i + 1 < frame_ids.size(); ++i) pairs.emplace_back(frame_ids[i], frame_ids[i + 1]);
  pairs.emplace_back(frame_ids.back(), frame_ids[frame_ids.size() - 2]);
  return pairs;
}

const std::vector<std::array<std::uint8_t, 3>>& color_wheel() {
  static const auto wheel = [] {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<std::uint8_t, 3>> w;
    auto ramp = [](int i, int n) { return static_cast<std::uint8_t>(std::floor(255.0 * i / n)); };
    for (int i = 0; i < RY; ++i) w.push_back({255, ramp(i, RY), 0});
    for (int i = 0; i < YG; ++i) w.push_back({static_cast<std::uint8_t>(255 - ramp(i, YG)), 255, 0});
    for (int i = 0; i < GC; ++i) w.push_back({0, 255, ramp(i, GC)});
    for (int i = 0; i < CB; ++i) w.push_back({0, static_cast<std::uint8_t>(255 - ramp(i, CB)), 255});
    for (int i = 0; i < BM; ++i) w.push_back({ramp(i, BM), 0, 255});
    for (int i = 0; i < MR; ++i) w.push_back({255, 0, static_cast<std::uint8_t>(255 - ramp(i, MR))});
    return w;
  }();
  return wheel;
}

double wheel_position(double u, double v) {
  const auto ncols = static_cast<double>(color_wheel().size());
  const double a = std::atan2(-v, -u) / std::numbers::pi;
  return (a + 1.0) / 2.0 * (ncols - 1.0);
}

RgbImage flow_to_rgb(const FlowField& flow, std::optional<double> max_magnitude) {
  const std::size_t n = flow.height * flow.width;
  if (flow.u.size() != n || flow.v.size() != n) throw ShapeError("flow field u/v size mismatch");

  double scale = 0.0;
  if (max_magnitude) {
    if (!(*max_magnitude > 0.0)) throw ArgumentError("max_magnitude must be positive");
    scale = *max_magnitude;
  } else {
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::hypot(double(flow.u[i]), double(flow.v[i])));
    // same guard as the reference visualiser
    scale = peak + 1e-5;
  }

  const auto& wheel = color_wheel();
  const auto ncols = static_cast<int>(wheel.size());
  RgbImage out(flow.height, flow.width);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = flow.u[i] / scale, v = flow.v[i] / scale;
    const double rad = std::min(1.0, std::sqrt(u * u + v * v));
    const double fk = wheel_position(u, v);
    const int k0 = static_cast<int>(std::floor(fk));
    const int k1 = k0 + 1 == ncols ? 0 : k0 + 1;
    const double f = fk - k0;
    for (int c = 0; c < 3; ++c) {
      const double col0 = wheel[static_cast<std::size_t>(k0)][static_cast<std::size_t>(c)] / 255.0;
      const double col1 = wheel[static_cast<std::size_t>(k1)][static_cast<std::size_t>(c)] / 255.0;
      const double col = 1.0 - rad * (1.0 - ((1.0 - f) * col0 + f * col1));
      out.data[3 * i + static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::floor(255.0 * col));
    }
  }
  return out;
}

}  // namespace flowcut
