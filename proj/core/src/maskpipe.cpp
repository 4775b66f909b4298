#include "flowcut/maskpipe.hpp"

#include <algorithm>

#include "flowcut/errors.hpp"

namespace flowcut {

namespace {

void check_tiling(GridShape grid, std::size_t patch_size, std::size_t height, std::size_t width) {
  if (patch_size == 0) throw ShapeError("patch size must be positive");
  if (grid.rows != (height + patch_size - 1) / patch_size || grid.cols != (width + patch_size - 1) / patch_size) {
    throw ShapeError("grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                     " does not tile a " + std::to_string(height) + "x" + std::to_string(width) +
                     " image with patch size " + std::to_string(patch_size));
  }
}

}  // namespace

PixelMask patch_to_pixel(std::span<const std::uint8_t> labels, GridShape grid, std::size_t patch_size,
                         std::size_t image_height, std::size_t image_width, MaskSource source) {
  if (labels.size() != grid.size()) throw ShapeError("labels length differs from grid size");
  check_tiling(grid, patch_size, image_height, image_width);
  PixelMask mask(image_height, image_width, source);
  for (std::size_t y = 0; y < image_height; ++y) {
    const auto* row = labels.data() + (y / patch_size) * grid.cols;
    for (std::size_t x = 0; x < image_width; ++x) mask.at(y, x) = row[x / patch_size] ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> block_majority(const PixelMask& mask, GridShape grid, std::size_t patch_size) {
  check_tiling(grid, patch_size, mask.height, mask.width);
  std::vector<std::size_t> ones(grid.size(), 0), total(grid.size(), 0);
  for (std::size_t y = 0; y < mask.height; ++y) {
    const auto r = y / patch_size;
    for (std::size_t x = 0; x < mask.width; ++x) {
      const auto k = r * grid.cols + x / patch_size;
      ones[k] += mask.at(y, x);
      ++total[k];
    }
  }
  std::vector<std::uint8_t> out(grid.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = 2 * ones[k] >= total[k] ? 1 : 0;
  return out;
}

PixelMask resize_nearest(const PixelMask& mask, std::size_t height, std::size_t width) {
  if (mask.height == height && mask.width == width) return mask;
  if (mask.height == 0 || mask.width == 0) throw ShapeError("cannot resize an empty mask");
  PixelMask out(height, width, mask.source);
  for (std::size_t y = 0; y < height; ++y) {
    const auto sy = std::min(mask.height - 1, (2 * y + 1) * mask.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const auto sx = std::min(mask.width - 1, (2 * x + 1) * mask.width / (2 * width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace flowcut
