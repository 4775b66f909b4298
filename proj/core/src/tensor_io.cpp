#include "flowcut/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flowcut/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "array I/O assumes a little-endian host");

namespace flowcut {

namespace fs = std::filesystem;

const char* to_string(FeatureKind kind) {
  return kind == FeatureKind::appearance ? "appearance" : "flow";
}

const char* to_string(MaskSource source) {
  switch (source) {
    case MaskSource::graphcut: return "graphcut";
    case MaskSource::crf: return "crf";
    case MaskSource::probe: return "probe";
    case MaskSource::ensemble: return "ensemble";
    case MaskSource::ground_truth: return "ground_truth";
    case MaskSource::external: return "external";
    case MaskSource::unknown: break;
  }
  return "unknown";
}

void FeatureGrid::validate() const {
  if (data.size() != rows * cols * channels) {
    throw ShapeError("feature grid data length " + std::to_string(data.size()) +
                     " != rows*cols*channels");
  }
  if (patch_size == 0) throw ShapeError("feature grid patch size must be positive");
  if (image_height != 0 || image_width != 0) {
    const auto expect_rows = (image_height + patch_size - 1) / patch_size;
    const auto expect_cols = (image_width + patch_size - 1) / patch_size;
    if (rows != expect_rows || cols != expect_cols) {
      throw ShapeError("feature grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not tile a " + std::to_string(image_height) + "x" +
                       std::to_string(image_width) + " image with patch size " +
                       std::to_string(patch_size));
    }
  }
}

std::size_t PixelMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void PixelMask::validate() const {
  if (data.size() != height * width) throw ShapeError("mask data length != height*width");
  for (auto v : data) {
    if (v > 1) throw FormatError("mask values must be 0 or 1");
  }
}

std::size_t NpyArray::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kAlign = 64;

std::string shape_repr(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  s += ")";
  return s;
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Minimal parser for the python-literal header dict written by numpy.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  void parse(std::string& descr, bool& fortran, std::vector<std::size_t>& shape) {
    bool have_descr = false, have_fortran = false, have_shape = false;
    skip_ws();
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') break;
      const auto key = parse_string();
      skip_ws();
      expect(':');
      skip_ws();
      if (key == "descr") {
        descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        fortran = parse_bool();
        have_fortran = true;
      } else if (key == "shape") {
        shape = parse_tuple();
        have_shape = true;
      } else {
        throw FormatError("unexpected key '" + key + "' in array header");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      if (peek() != '}') throw FormatError("malformed array header dict");
    }
    if (!have_descr || !have_fortran || !have_shape) {
      throw FormatError("array header is missing descr, fortran_order or shape");
    }
  }

 private:
  char peek() const {
    if (pos_ >= text_.size()) throw FormatError("truncated array header");
    return text_[pos_];
  }
  void expect(char c) {
    if (peek() != c) throw FormatError(std::string("array header: expected '") + c + "'");
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') throw FormatError("array header: expected string");
    ++pos_;
    const auto end = text_.find(quote, pos_);
    if (end == std::string_view::npos) throw FormatError("array header: unterminated string");
    std::string out(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }
  bool parse_bool() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    throw FormatError("array header: expected True/False");
  }
  std::vector<std::size_t> parse_tuple() {
    std::vector<std::size_t> out;
    expect('(');
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return out;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) {
        throw FormatError("array header: bad shape entry");
      }
      std::size_t value = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
        ++pos_;
      }
      // numpy emits "5L" on some python 2 era writers
      if (pos_ < text_.size() && text_[pos_] == 'L') ++pos_;
      out.push_back(value);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_npy(const NpyArray& array) {
  if (shape_product(array.shape) != array.size()) {
    throw ShapeError("array payload length does not match its shape");
  }
  const char* descr = array.dtype() == Dtype::float32 ? "<f4" : "|u1";
  std::string dict = std::string("{'descr': '") + descr +
                     "', 'fortran_order': False, 'shape': " + shape_repr(array.shape) + ", }";
  const std::size_t unpadded = kMagicLen + 2 + 2 + dict.size() + 1;
  dict.append((kAlign - unpadded % kAlign) % kAlign, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw ShapeError("array header too long for format 1.0");

  std::vector<std::uint8_t> out;
  const std::size_t payload_bytes =
      array.dtype() == Dtype::float32 ? array.size() * sizeof(float) : array.size();
  out.reserve(kMagicLen + 4 + dict.size() + payload_bytes);
  out.insert(out.end(), kMagic, kMagic + kMagicLen);
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(dict.size() & 0xFF));
  out.push_back(static_cast<std::uint8_t>(dict.size() >> 8));
  out.insert(out.end(), dict.begin(), dict.end());
  std::visit(
      [&](const auto& v) {
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(v.data());
        out.insert(out.end(), bytes, bytes + v.size() * sizeof(v[0]));
      },
      array.data);
  return out;
}

NpyArray decode_npy(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("missing array magic header");
  }
  const auto major = bytes[kMagicLen];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (std::size_t{bytes[9]} << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError("truncated array header");
    header_len = bytes[8] | (std::size_t{bytes[9]} << 8) | (std::size_t{bytes[10]} << 16) |
                 (std::size_t{bytes[11]} << 24);
    offset = 12;
  } else {
    throw FormatError("unsupported array format version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw FormatError("truncated array header");

  std::string descr;
  bool fortran = false;
  NpyArray array;
  std::string_view header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);
  HeaderParser(header).parse(descr, fortran, array.shape);
  if (fortran) throw FormatError("fortran-ordered arrays are not supported");

  const auto count = shape_product(array.shape);
  const auto payload = bytes.subspan(offset + header_len);
  if (descr == "<f4") {
    if (payload.size() != count * sizeof(float)) {
      throw FormatError("array payload size does not match shape");
    }
    std::vector<float> values(count);
    std::memcpy(values.data(), payload.data(), payload.size());
    array.data = std::move(values);
  } else if (descr == "|u1" || descr == "<u1" || descr == "u1") {
    if (payload.size() != count) throw FormatError("array payload size does not match shape");
    array.data = std::vector<std::uint8_t>(payload.begin(), payload.end());
  } else {
    throw UnsupportedDtype("unsupported array dtype '" + descr + "'");
  }
  return array;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

NpyArray read_array(const fs::path& path) {
  try {
    return decode_npy(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const UnsupportedDtype& e) {
    throw UnsupportedDtype(path.string() + ": " + e.what());
  }
}

void write_array(const fs::path& path, const NpyArray& array) {
  write_file_bytes(path, encode_npy(array));
}

FeatureGrid read_feature_grid(const fs::path& path, FeatureKind kind, std::size_t patch_size,
                              std::size_t image_height, std::size_t image_width) {
  auto array = read_array(path);
  if (array.dtype() != Dtype::float32) {
    throw UnsupportedDtype(path.string() + ": feature grids must be float32");
  }
  if (array.shape.size() != 3) throw ShapeError(path.string() + ": feature grid must be 3-D");
  FeatureGrid grid;
  grid.rows = array.shape[0];
  grid.cols = array.shape[1];
  grid.channels = array.shape[2];
  grid.data = std::move(std::get<std::vector<float>>(array.data));
  grid.patch_size = patch_size;
  grid.image_height = image_height;
  grid.image_width = image_width;
  grid.kind = kind;
  grid.validate();
  return grid;
}

void write_feature_grid(const fs::path& path, const FeatureGrid& grid) {
  grid.validate();
  write_array(path, NpyArray{{grid.rows, grid.cols, grid.channels}, grid.data});
}

PixelMask read_mask_array(const fs::path& path) {
  auto array = read_array(path);
  if (array.dtype() != Dtype::uint8) throw UnsupportedDtype(path.string() + ": masks must be uint8");
  if (array.shape.size() != 2) throw ShapeError(path.string() + ": mask must be 2-D");
  PixelMask mask;
  mask.height = array.shape[0];
  mask.width = array.shape[1];
  mask.data = std::move(std::get<std::vector<std::uint8_t>>(array.data));
  try {
    mask.validate();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return mask;
}

void write_mask_array(const fs::path& path, const PixelMask& mask) {
  mask.validate();
  write_array(path, NpyArray{{mask.height, mask.width}, mask.data});
}

FlowField read_flow_array(const fs::path& path) {
  auto array = read_array(path);
  if (array.dtype() != Dtype::float32) throw UnsupportedDtype(path.string() + ": flow must be float32");
  if (array.shape.size() != 3 || array.shape[2] != 2) {
    throw ShapeError(path.string() + ": flow must have shape (H, W, 2)");
  }
  const auto& values = std::get<std::vector<float>>(array.data);
  FlowField flow;
  flow.height = array.shape[0];
  flow.width = array.shape[1];
  const auto n = flow.height * flow.width;
  flow.u.resize(n);
  flow.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    flow.u[i] = values[2 * i];
    flow.v[i] = values[2 * i + 1];
  }
  return flow;
}

void write_flow_array(const fs::path& path, const FlowField& flow) {
  const auto n = flow.height * flow.width;
  if (flow.u.size() != n || flow.v.size() != n) throw ShapeError("flow field u/v size mismatch");
  std::vector<float> values(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    values[2 * i] = flow.u[i];
    values[2 * i + 1] = flow.v[i];
  }
  write_array(path, NpyArray{{flow.height, flow.width, 2}, std::move(values)});
}

}  // namespace flowcut
