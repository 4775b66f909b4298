#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowcut/image_io.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

/// Flow source/target pairs for an ordered frame list: (f_i, f_i+1) for every
/// frame but the last, which pairs backwards with its predecessor. Throws
/// PairingError for fewer than two frames.
std::vector<std::pair<std::string, std::string>> pair_frames(const std::vector<std::string>& frame_ids);

/// The 55-entry Middlebury colour wheel (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6).
const std::vector<std::array<std::uint8_t, 3>>& color_wheel();

/// Fractional wheel index in [0, ncols - 1] for a flow vector.
double wheel_position(double u, double v);

/// Colour-wheel rendering. Hue follows the flow direction, saturation the
/// magnitude divided by max_magnitude (clipped to 1). With no max_magnitude
/// the per-frame maximum magnitude is used. Zero flow renders white.
RgbImage flow_to_rgb(const FlowField& flow, std::optional<double> max_magnitude = std::nullopt);

}  // namespace flowcut
