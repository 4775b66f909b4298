#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "flowcut/tensor_io.hpp"

namespace flowcut {

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * 3, 0) {}

  const std::uint8_t* pixel(std::size_t y, std::size_t x) const { return &data[(y * width + x) * 3]; }
  std::uint8_t* pixel(std::size_t y, std::size_t x) { return &data[(y * width + x) * 3]; }
};

/// 8-bit single channel image (label maps, masks on disk).
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;
};

RgbImage read_rgb_image(const std::filesystem::path& path);  // .png or binary .ppm
void write_png(const std::filesystem::path& path, const RgbImage& image);

GrayImage read_gray_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Loads a mask from .npy ({0,1} uint8) or .png. A PNG holding several
/// nonzero label values is split per label and merged into one foreground.
PixelMask read_mask_file(const std::filesystem::path& path);

}  // namespace flowcut
