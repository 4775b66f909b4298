#include "flowcut/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "flowcut/errors.hpp"
#include "flowcut/metrics.hpp"

namespace flowcut {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_png_as(const fs::path& path, png_uint_32 format, std::size_t& height,
                                      std::size_t& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  height = image.height;
  width = image.width;
  return buffer;
}

void write_png_as(const fs::path& path, png_uint_32 format, std::size_t height, std::size_t width,
                  const std::vector<std::uint8_t>& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
    throw Error(path.string() + ": " + image.message);
  }
}

RgbImage read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw FormatError(path.string() + ": only binary P6 PPM is supported");
  auto next_int = [&]() {
    int value = 0;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> value)) throw FormatError(path.string() + ": malformed PPM header");
      return value;
    }
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": unsupported PPM geometry or depth");
  }
  in.get();
  RgbImage image(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
  in.read(reinterpret_cast<char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  if (!in) throw FormatError(path.string() + ": truncated PPM payload");
  return image;
}

}  // namespace

RgbImage read_rgb_image(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ppm") return read_ppm(path);
  if (ext != ".png") throw FormatError(path.string() + ": frames must be .png or .ppm");
  RgbImage image;
  image.data = read_png_as(path, PNG_FORMAT_RGB, image.height, image.width);
  return image;
}

void write_png(const fs::path& path, const RgbImage& image) {
  write_png_as(path, PNG_FORMAT_RGB, image.height, image.width, image.data);
}

GrayImage read_gray_png(const fs::path& path) {
  GrayImage image;
  image.data = read_png_as(path, PNG_FORMAT_GRAY, image.height, image.width);
  return image;
}

void write_png(const fs::path& path, const GrayImage& image) {
  write_png_as(path, PNG_FORMAT_GRAY, image.height, image.width, image.data);
}

PixelMask read_mask_file(const fs::path& path) {
  if (path.extension() == ".npy") return read_mask_array(path);
  if (path.extension() != ".png") throw FormatError(path.string() + ": masks must be .npy or .png");

  const auto gray = read_gray_png(path);
  std::set<std::uint8_t> labels(gray.data.begin(), gray.data.end());
  labels.erase(0);
  if (labels.empty()) return PixelMask(gray.height, gray.width, MaskSource::ground_truth);

  std::vector<PixelMask> objects;
  for (auto label : labels) {
    PixelMask m(gray.height, gray.width, MaskSource::ground_truth);
    std::transform(gray.data.begin(), gray.data.end(), m.data.begin(),
                   [label](std::uint8_t v) { return static_cast<std::uint8_t>(v == label); });
    objects.push_back(std::move(m));
  }
  auto merged = merge_masks(objects);
  merged.source = MaskSource::ground_truth;
  return merged;
}

}  // namespace flowcut
