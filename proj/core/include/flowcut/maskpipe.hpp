#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flowcut/spectral.hpp"
#include "flowcut/tensor_io.hpp"

namespace flowcut {

/// Replicates each patch label over its patch_size^2 pixel block; blocks on
/// the right and bottom edges are cropped to the image.
PixelMask patch_to_pixel(std::span<const std::uint8_t> labels, GridShape grid, std::size_t patch_size,
                         std::size_t image_height, std::size_t image_width,
                         MaskSource source = MaskSource::graphcut);

/// Per-patch majority vote over each (possibly cropped) pixel block. Ties go
/// to foreground.
std::vector<std::uint8_t> block_majority(const PixelMask& mask, GridShape grid, std::size_t patch_size);

/// Nearest-neighbour resize.
PixelMask resize_nearest(const PixelMask& mask, std::size_t height, std::size_t width);

}  // namespace flowcut
