#pragma once

// Portable array files (.npy, format 1.0) for feature grids, flow fields and
// masks. Only little-endian float32 and uint8 payloads are supported.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace flowcut {

enum class FeatureKind { appearance, flow };

enum class MaskSource { graphcut, crf, probe, ensemble, ground_truth, external, unknown };

const char* to_string(FeatureKind kind);
const char* to_string(MaskSource source);

/// rows x cols x channels patch features, row-major, plus the pixel geometry
/// the grid was cut from.
struct FeatureGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::vector<float> data;
  std::size_t patch_size = 1;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  FeatureKind kind = FeatureKind::appearance;

  std::size_t patches() const noexcept { return rows * cols; }
  std::span<const float> patch(std::size_t index) const {
    return {data.data() + index * channels, channels};
  }
  std::span<float> patch(std::size_t index) { return {data.data() + index * channels, channels}; }

  /// Throws ShapeError if the data length or pixel geometry is inconsistent.
  void validate() const;
};

struct PixelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;
  MaskSource source = MaskSource::unknown;

  PixelMask() = default;
  PixelMask(std::size_t h, std::size_t w, MaskSource src = MaskSource::unknown)
      : height(h), width(w), data(h * w, 0), source(src) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::size_t area() const noexcept;
  bool same_shape(const PixelMask& other) const noexcept {
    return height == other.height && width == other.width;
  }

  void validate() const;
};

enum class Dtype { float32, uint8 };

/// A decoded array file: shape plus one of the two supported payloads.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::variant<std::vector<float>, std::vector<std::uint8_t>> data;

  Dtype dtype() const noexcept {
    return std::holds_alternative<std::vector<float>>(data) ? Dtype::float32 : Dtype::uint8;
  }
  std::size_t size() const noexcept;
};

std::vector<std::uint8_t> encode_npy(const NpyArray& array);
NpyArray decode_npy(std::span<const std::uint8_t> bytes);

NpyArray read_array(const std::filesystem::path& path);
void write_array(const std::filesystem::path& path, const NpyArray& array);

/// Reads an (rows, cols, channels) float32 array as a feature grid. Pixel
/// geometry is supplied by the caller since the file carries only the shape.
FeatureGrid read_feature_grid(const std::filesystem::path& path, FeatureKind kind,
                              std::size_t patch_size, std::size_t image_height,
                              std::size_t image_width);
void write_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid);

/// Masks are (height, width) uint8 arrays with values in {0,1}.
PixelMask read_mask_array(const std::filesystem::path& path);
void write_mask_array(const std::filesystem::path& path, const PixelMask& mask);

/// Dense optical flow: horizontal (u) and vertical (v) displacement in pixels.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> u;
  std::vector<float> v;
};

/// Flow fields are stored as (height, width, 2) float32 arrays.
FlowField read_flow_array(const std::filesystem::path& path);
void write_flow_array(const std::filesystem::path& path, const FlowField& flow);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace flowcut
