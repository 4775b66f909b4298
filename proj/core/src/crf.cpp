#include "flowcut/crf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <unordered_map>

#include "flowcut/errors.hpp"

namespace flowcut {

void CrfParams::validate() const {
  if (iterations < 1) throw ArgumentError("CRF needs at least one iteration");
  if (!(w_appearance >= 0.0) || !(w_smoothness >= 0.0)) throw ArgumentError("CRF weights must be >= 0");
  if (!(theta_alpha > 0.0) || !(theta_beta > 0.0) || !(theta_gamma > 0.0)) {
    throw ArgumentError("CRF kernel widths must be positive");
  }
  if (!(unary_confidence > 0.5 && unary_confidence < 1.0)) {
    throw ArgumentError("CRF unary confidence must lie in (0.5, 1)");
  }
}

namespace {

// Permutohedral lattice for Gaussian filtering in D dimensions with unit
// standard deviation in feature units (after Adams et al. 2010 and the
// dense-CRF reference code). Output is rescaled by lattice_scale so it
// approximates unnormalised kernel sums.
template <int D>
class PermutohedralLattice {
 public:
  using Key = std::array<std::int32_t, D>;

  explicit PermutohedralLattice(const std::vector<std::array<double, D>>& features) : n_(features.size()) {
    offsets_.resize(n_ * (D + 1));
    weights_.resize(n_ * (D + 1));

    std::array<double, D> scale{};
    const double inv_std = std::sqrt(2.0 / 3.0) * (D + 1);
    for (int i = 0; i < D; ++i) scale[i] = inv_std / std::sqrt(double((i + 1) * (i + 2)));

    std::array<std::array<int, D + 1>, D + 1> canonical{};
    for (int i = 0; i <= D; ++i) {
      for (int j = 0; j <= D - i; ++j) canonical[i][j] = i;
      for (int j = D - i + 1; j <= D; ++j) canonical[i][j] = i - (D + 1);
    }

    std::array<double, D + 1> elevated{};
    std::array<int, D + 1> rem0{}, rank{};
    std::array<double, D + 2> bary{};
    const double down = 1.0 / (D + 1);

    for (std::size_t k = 0; k < n_; ++k) {
      const auto& f = features[k];
      double sm = 0.0;
      for (int j = D; j > 0; --j) {
        const double cf = f[j - 1] * scale[j - 1];
        elevated[j] = sm - j * cf;
        sm += cf;
      }
      elevated[0] = sm;

      int sum = 0;
      for (int i = 0; i <= D; ++i) {
        const double v = down * elevated[i];
        const double up = std::ceil(v) * (D + 1);
        const double dn = std::floor(v) * (D + 1);
        rem0[i] = static_cast<int>(up - elevated[i] < elevated[i] - dn ? up : dn);
        sum += rem0[i];
      }
      sum /= (D + 1);

      rank.fill(0);
      for (int i = 0; i < D; ++i) {
        const double di = elevated[i] - rem0[i];
        for (int j = i + 1; j <= D; ++j) {
          if (di < elevated[j] - rem0[j]) {
            ++rank[i];
          } else {
            ++rank[j];
          }
        }
      }
      for (int i = 0; i <= D; ++i) {
        rank[i] += sum;
        if (rank[i] < 0) {
          rank[i] += D + 1;
          rem0[i] += D + 1;
        } else if (rank[i] > D) {
          rank[i] -= D + 1;
          rem0[i] -= D + 1;
        }
      }

      bary.fill(0.0);
      for (int i = 0; i <= D; ++i) {
        const double v = (elevated[i] - rem0[i]) * down;
        bary[D - rank[i]] += v;
        bary[D - rank[i] + 1] -= v;
      }
      bary[0] += 1.0 + bary[D + 1];

      for (int r = 0; r <= D; ++r) {
        Key key{};
        for (int i = 0; i < D; ++i) key[i] = rem0[i] + canonical[r][rank[i]];
        offsets_[k * (D + 1) + r] = insert(key);
        weights_[k * (D + 1) + r] = bary[r];
      }
    }

    const std::size_t m = keys_.size();
    neighbours_.resize((D + 1) * m);
    for (int dir = 0; dir <= D; ++dir) {
      for (std::size_t i = 0; i < m; ++i) {
        Key n1{}, n2{};
        for (int k = 0; k < D; ++k) {
          n1[k] = keys_[i][k] - 1;
          n2[k] = keys_[i][k] + 1;
        }
        if (dir < D) {
          n1[dir] = keys_[i][dir] + D;
          n2[dir] = keys_[i][dir] - D;
        }
        neighbours_[dir * m + i] = {find(n1), find(n2)};
      }
    }
  }

  // Raw lattice filter of `in` (one value per point). Not calibrated.
  void filter(const std::vector<double>& in, std::vector<double>& out) const {
    const std::size_t m = keys_.size();
    std::vector<double> values(m + 1, 0.0), next(m + 1, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      for (int r = 0; r <= D; ++r) {
        values[offsets_[k * (D + 1) + r] + 1] += weights_[k * (D + 1) + r] * in[k];
      }
    }
    for (int dir = 0; dir <= D; ++dir) {
      next[0] = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const auto [a, b] = neighbours_[dir * m + i];
        next[i + 1] = values[i + 1] + 0.5 * (values[a + 1] + values[b + 1]);
      }
      std::swap(values, next);
    }
    const double alpha = 1.0 / (1.0 + std::pow(2.0, -D));
    out.assign(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      double acc = 0.0;
      for (int r = 0; r <= D; ++r) acc += weights_[k * (D + 1) + r] * values[offsets_[k * (D + 1) + r] + 1];
      out[k] = acc * alpha;
    }
  }

 private:
  struct KeyHash {
    std::size_t operator()(const Key& key) const noexcept {
      std::size_t h = 0;
      for (auto v : key) h = h * 2531011u + static_cast<std::uint32_t>(v);
      return h;
    }
  };

  std::int64_t insert(const Key& key) {
    auto [it, inserted] = index_.emplace(key, static_cast<std::int64_t>(keys_.size()));
    if (inserted) keys_.push_back(key);
    return it->second;
  }

  std::int64_t find(const Key& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? -1 : it->second;
  }

  std::size_t n_;
  std::vector<std::int64_t> offsets_;
  std::vector<double> weights_;
  std::vector<Key> keys_;
  std::unordered_map<Key, std::int64_t, KeyHash> index_;
  std::vector<std::pair<std::int64_t, std::int64_t>> neighbours_;
};

// Least-squares ratio between exact unit-Gaussian sums and raw lattice
// output over up to kSamples evenly spaced points. The lattice overblurs by
// an amount that depends on how the points are distributed, so the fit is
// done per point set rather than once.
template <int D>
double lattice_scale(const std::vector<std::array<double, D>>& pts, const std::vector<double>& raw_ones) {
  constexpr std::size_t kSamples = 128;
  const std::size_t n = pts.size();
  const std::size_t step = std::max<std::size_t>(1, n / kSamples);
  double num = 0.0, den = 0.0;
  for (std::size_t i = step / 2; i < n; i += step) {
    double exact = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < D; ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      exact += std::exp(-0.5 * d2);
    }
    num += exact * raw_ones[i];
    den += raw_ones[i] * raw_ones[i];
  }
  return den > 0.0 ? num / den : 1.0;
}

// 1-D Gaussian blur along rows then columns, truncated at 4 sigma.
void separable_gaussian(const std::vector<double>& in, std::size_t h, std::size_t w, double sigma,
                        std::vector<double>& out) {
  const long radius = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  for (long k = -radius; k <= radius; ++k) {
    taps[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
  }
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  std::vector<double> tmp(h * w, 0.0);
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (long k = std::max(-radius, -x); k <= std::min(radius, W - 1 - x); ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * in[static_cast<std::size_t>(y * W + x + k)];
      }
      tmp[static_cast<std::size_t>(y * W + x)] = acc;
    }
  }
  out.assign(h * w, 0.0);
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (long k = std::max(-radius, -y); k <= std::min(radius, H - 1 - y); ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>((y + k) * W + x)];
      }
      out[static_cast<std::size_t>(y * W + x)] = acc;
    }
  }
}

class PairwiseOperator {
 public:
  virtual ~PairwiseOperator() = default;
  // out_i = sum_{j != i} k(i, j) values_j
  virtual void apply(const std::vector<double>& values, std::vector<double>& out) const = 0;
};

class ExactPairwise final : public PairwiseOperator {
 public:
  ExactPairwise(const RgbImage& image, const CrfParams& p) : image_(image), p_(p) {}

  void apply(const std::vector<double>& values, std::vector<double>& out) const override {
    const std::size_t h = image_.height, w = image_.width, n = h * w;
    const double ia = 1.0 / (2.0 * p_.theta_alpha * p_.theta_alpha);
    const double ib = 1.0 / (2.0 * p_.theta_beta * p_.theta_beta);
    const double ig = 1.0 / (2.0 * p_.theta_gamma * p_.theta_gamma);
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = static_cast<double>(i / w), xi = static_cast<double>(i % w);
      const auto* ci = &image_.data[3 * i];
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dy = yi - static_cast<double>(j / w), dx = xi - static_cast<double>(j % w);
        const double dp = dy * dy + dx * dx;
        const auto* cj = &image_.data[3 * j];
        double dc = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double diff = static_cast<double>(ci[c]) - static_cast<double>(cj[c]);
          dc += diff * diff;
        }
        const double k = p_.w_appearance * std::exp(-dp * ia - dc * ib) + p_.w_smoothness * std::exp(-dp * ig);
        acc += k * values[j];
      }
      out[i] = acc;
    }
  }

 private:
  const RgbImage& image_;
  CrfParams p_;
};

class ApproximatePairwise final : public PairwiseOperator {
 public:
  ApproximatePairwise(const RgbImage& image, const CrfParams& p) : h_(image.height), w_(image.width), p_(p) {
    std::vector<std::array<double, 5>> features(h_ * w_);
    for (std::size_t y = 0; y < h_; ++y) {
      for (std::size_t x = 0; x < w_; ++x) {
        const auto* c = image.pixel(y, x);
        features[y * w_ + x] = {static_cast<double>(y) / p.theta_alpha, static_cast<double>(x) / p.theta_alpha,
                                c[0] / p.theta_beta, c[1] / p.theta_beta, c[2] / p.theta_beta};
      }
    }
    lattice_ = std::make_unique<PermutohedralLattice<5>>(features);
    if (p.w_appearance > 0.0) {
      std::vector<double> raw;
      lattice_->filter(std::vector<double>(features.size(), 1.0), raw);
      scale_ = lattice_scale<5>(features, raw);
    }
  }

  void apply(const std::vector<double>& values, std::vector<double>& out) const override {
    const std::size_t n = h_ * w_;
    std::vector<double> bilateral, spatial;
    if (p_.w_appearance > 0.0) lattice_->filter(values, bilateral);
    if (p_.w_smoothness > 0.0) separable_gaussian(values, h_, w_, p_.theta_gamma, spatial);
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      // both filters include the j == i term with kernel value 1
      if (p_.w_appearance > 0.0) acc += p_.w_appearance * (scale_ * bilateral[i] - values[i]);
      if (p_.w_smoothness > 0.0) acc += p_.w_smoothness * (spatial[i] - values[i]);
      out[i] = std::max(acc, 0.0);
    }
  }

 private:
  std::size_t h_, w_;
  CrfParams p_;
  std::unique_ptr<PermutohedralLattice<5>> lattice_;
  double scale_ = 1.0;
};

std::unique_ptr<PairwiseOperator> make_operator(const RgbImage& image, const CrfParams& p, bool approximate) {
  if (approximate) return std::make_unique<ApproximatePairwise>(image, p);
  return std::make_unique<ExactPairwise>(image, p);
}

bool use_approximation(const PixelMask& mask, const CrfParams& p) {
  switch (p.backend) {
    case CrfBackend::exact: return false;
    case CrfBackend::approximate: return true;
    case CrfBackend::automatic: break;
  }
  return mask.height * mask.width > p.exact_max_pixels;
}

void check_inputs(const PixelMask& mask, const RgbImage& image) {
  if (mask.height != image.height || mask.width != image.width) {
    throw ShapeError("CRF mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                     " but image is " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  if (image.data.size() != image.height * image.width * 3) throw ShapeError("RGB image buffer size mismatch");
  if (mask.data.size() != mask.height * mask.width) throw ShapeError("mask buffer size mismatch");
}

}  // namespace

namespace detail {

void crf_messages(const RgbImage& image, const CrfParams& params, bool approximate,
                  const std::vector<double>& values, std::vector<double>& out, std::vector<double>& ones_out) {
  auto op = make_operator(image, params, approximate);
  op->apply(values, out);
  op->apply(std::vector<double>(values.size(), 1.0), ones_out);
}

}  // namespace detail

std::vector<double> crf_marginals(const PixelMask& mask, const RgbImage& image, const CrfParams& params) {
  params.validate();
  check_inputs(mask, image);
  const std::size_t n = mask.height * mask.width;

  const double q = params.unary_confidence;
  const double u_hi = -std::log(q), u_lo = -std::log(1.0 - q);
  // energies: fg costs u_hi on mask pixels, u_lo elsewhere; bg the reverse
  std::vector<double> unary_fg(n), unary_bg(n), marginal(n);
  for (std::size_t i = 0; i < n; ++i) {
    unary_fg[i] = mask.data[i] ? u_hi : u_lo;
    unary_bg[i] = mask.data[i] ? u_lo : u_hi;
    marginal[i] = 1.0 / (1.0 + std::exp(unary_fg[i] - unary_bg[i]));
  }

  auto op = make_operator(image, params, use_approximation(mask, params));
  std::vector<double> total, weighted;
  op->apply(std::vector<double>(n, 1.0), total);
  for (std::size_t it = 0; it < params.iterations; ++it) {
    op->apply(marginal, weighted);
    for (std::size_t i = 0; i < n; ++i) {
      // Potts: label fg pays for mass of bg neighbours and vice versa
      const double e_fg = unary_fg[i] + (total[i] - weighted[i]);
      const double e_bg = unary_bg[i] + weighted[i];
      marginal[i] = 1.0 / (1.0 + std::exp(e_fg - e_bg));
    }
  }
  return marginal;
}

PixelMask crf_refine(const PixelMask& mask, const RgbImage& image, const CrfParams& params) {
  params.validate();
  check_inputs(mask, image);
  const auto area = mask.area();
  if (area == 0 || area == mask.data.size()) {
    PixelMask out = mask;
    out.source = MaskSource::crf;
    return out;
  }
  const auto marginal = crf_marginals(mask, image, params);
  PixelMask out(mask.height, mask.width, MaskSource::crf);
  for (std::size_t i = 0; i < marginal.size(); ++i) {
    if (marginal[i] > 0.5) {
      out.data[i] = 1;
    } else if (marginal[i] < 0.5) {
      out.data[i] = 0;
    } else {
      out.data[i] = mask.data[i];
    }
  }
  return out;
}

}  // namespace flowcut
