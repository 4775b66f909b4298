#include "synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "flowcut/image_io.hpp"
#include "flowcut/maskpipe.hpp"

#ifndef FLOWCUT_TEST_TMP_DIR
#error "FLOWCUT_TEST_TMP_DIR must be defined"
#endif

namespace flowcut::testing {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(FLOWCUT_TEST_TMP_DIR) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double Normal::uniform() { return static_cast<double>(state_() >> 11) * 0x1.0p-53; }

double Normal::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::uint8_t> planted_patches(std::size_t rows, std::size_t cols, std::size_t s, std::size_t f) {
  const std::size_t h = std::max<std::size_t>(1, rows / 3);
  const std::size_t w = std::max<std::size_t>(1, cols / 3);
  const std::size_t r_span = rows > h + 2 ? rows - h - 1 : 1;
  const std::size_t c_span = cols > w + 2 ? cols - w - 1 : 1;
  const std::size_t r0 = 1 + f % r_span;
  const std::size_t c0 = 1 + (s + f) % c_span;
  std::vector<std::uint8_t> out(rows * cols, 0);
  for (std::size_t r = r0; r < std::min(rows, r0 + h); ++r) {
    for (std::size_t c = c0; c < std::min(cols, c0 + w); ++c) out[r * cols + c] = 1;
  }
  return out;
}

std::vector<std::uint8_t> flip_patches(const std::vector<std::uint8_t>& labels, double p, std::uint64_t seed) {
  Normal rng(seed);
  auto out = labels;
  for (auto& v : out) {
    if (rng.uniform() < p) v = static_cast<std::uint8_t>(1 - v);
  }
  return out;
}

namespace {

std::vector<double> random_unit(Normal& rng, std::size_t c) {
  std::vector<double> v(c);
  double n2 = 0.0;
  for (auto& x : v) {
    x = rng();
    n2 += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n2);
  return v;
}

// Second unit vector orthogonal to `a`.
std::vector<double> orthogonal_unit(Normal& rng, const std::vector<double>& a) {
  auto b = random_unit(rng, a.size());
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] * b[k];
  double n2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    b[k] -= d * a[k];
    n2 += b[k] * b[k];
  }
  for (auto& x : b) x /= std::sqrt(n2);
  return b;
}

struct Centres {
  std::vector<double> fg, bg;
};

Centres random_centres(Normal& rng, std::size_t channels) {
  Centres c;
  c.bg = random_unit(rng, channels);
  c.fg = orthogonal_unit(rng, c.bg);
  return c;
}

FeatureGrid clustered_grid(Normal& rng, const std::vector<std::uint8_t>& labels, const PlantedSpec& spec,
                           FeatureKind kind, const Centres& centres) {
  const auto& fg = centres.fg;
  const auto& bg = centres.bg;
  FeatureGrid g;
  g.rows = spec.rows;
  g.cols = spec.cols;
  g.channels = spec.channels;
  g.kind = kind;
  g.patch_size = spec.patch_size;
  g.image_height = spec.rows * spec.patch_size;
  g.image_width = spec.cols * spec.patch_size;
  g.data.resize(g.rows * g.cols * g.channels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& centre = labels[i] ? fg : bg;
    for (std::size_t k = 0; k < spec.channels; ++k) {
      g.data[i * spec.channels + k] = static_cast<float>(centre[k] + spec.noise * rng());
    }
  }
  return g;
}

RgbImage two_tone_image(Normal& rng, const PixelMask& mask) {
  RgbImage img(mask.height, mask.width);
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      const int base[3] = {mask.at(y, x) ? 200 : 40, mask.at(y, x) ? 60 : 90, mask.at(y, x) ? 40 : 200};
      auto* px = img.pixel(y, x);
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::clamp(base[c] + static_cast<int>(std::lround(4.0 * rng())), 0, 255));
      }
    }
  }
  return img;
}

}  // namespace

PlantedDataset make_planted_dataset(const fs::path& root, const PlantedSpec& spec) {
  fs::create_directories(root);
  {
    std::ofstream toml(root / "dataset.toml");
    toml << "# synthetic planted-partition fixture\n"
         << "averaging_mode = \"" << spec.averaging_mode << "\"\n"
         << "patch_size = " << spec.patch_size << "\n";
  }
  PlantedDataset out;
  out.root = root;
  Normal rng(spec.seed);
  const auto app_centres = random_centres(rng, spec.channels);
  for (std::size_t s = 0; s < spec.sequences; ++s) {
    const std::string seq = "seq" + std::to_string(s);
    for (std::size_t f = 0; f < spec.frames; ++f) {
      char name[16];
      std::snprintf(name, sizeof(name), "%05zu", f);
      const std::string key = seq + "/" + name;
      const auto labels = planted_patches(spec.rows, spec.cols, s, f);
      const auto app = clustered_grid(rng, labels, spec, FeatureKind::appearance, app_centres);
      const auto flow = clustered_grid(rng, labels, spec, FeatureKind::flow, random_centres(rng, spec.channels));
      write_feature_grid(root / "feat_app" / seq / (std::string(name) + ".npy"), app);
      write_feature_grid(root / "feat_flow" / seq / (std::string(name) + ".npy"), flow);

      const auto mask = patch_to_pixel(labels, {spec.rows, spec.cols}, spec.patch_size, app.image_height,
                                       app.image_width, MaskSource::ground_truth);
      out.ground_truth.emplace(key, mask);
      out.patch_gt.emplace(key, labels);
      if (spec.write_ground_truth) {
        if (spec.gt_format == "png") {
          GrayImage gray{mask.height, mask.width, mask.data};
          for (auto& v : gray.data) v = v ? 255 : 0;
          write_png(root / "gt" / seq / (std::string(name) + ".png"), gray);
        } else {
          write_mask_array(root / "gt" / seq / (std::string(name) + ".npy"), mask);
        }
      }
      if (spec.write_images) {
        write_png(root / "frames" / seq / (std::string(name) + ".png"), two_tone_image(rng, mask));
      }
    }
  }
  return out;
}

FeatureGrid random_grid(Normal& rng, std::size_t rows, std::size_t cols, std::size_t channels,
                        FeatureKind kind) {
  FeatureGrid g;
  g.rows = rows;
  g.cols = cols;
  g.channels = channels;
  g.kind = kind;
  g.patch_size = 1;
  g.image_height = rows;
  g.image_width = cols;
  g.data.resize(rows * cols * channels);
  for (auto& v : g.data) v = static_cast<float>(rng());
  return g;
}

void write_mask_tree(const fs::path& dir, const std::map<std::string, PixelMask>& masks) {
  for (const auto& [key, mask] : masks) write_mask_array(dir / (key + ".npy"), mask);
}

std::map<std::string, std::vector<std::uint8_t>> snapshot_tree(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.emplace(fs::relative(e.path(), dir).generic_string(), read_file_bytes(e.path()));
  }
  return out;
}

}  // namespace flowcut::testing
