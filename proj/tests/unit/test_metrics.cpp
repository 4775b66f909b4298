#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/metrics.hpp"
#include "metric_oracles.hpp"
#include "synthetic.hpp"

using namespace flowcut;

namespace {

PixelMask rect(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
  PixelMask m(h, w);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) m.at(y, x) = 1;
  }
  return m;
}

PixelMask random_mask(testing::Normal& rng, std::size_t h, std::size_t w, double p) {
  PixelMask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < p ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("jaccard closed forms") {
  const auto a = rect(8, 8, 0, 0, 4, 4);
  CHECK(jaccard(a, a) == 1.0);
  CHECK(jaccard(a, rect(8, 8, 4, 4, 8, 8)) == 0.0);
  // area 16 each, overlap 8
  CHECK(jaccard(a, rect(8, 8, 0, 2, 4, 6)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(jaccard(PixelMask(8, 8), PixelMask(8, 8)) == 1.0);
  CHECK(jaccard(a, PixelMask(8, 8)) == 0.0);
  CHECK_THROWS_AS(jaccard(a, PixelMask(8, 9)), ShapeError);
}

TEST_CASE("jaccard matches brute force and is symmetric") {
  testing::Normal rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_mask(rng, 8, 8, rng.uniform()), b = random_mask(rng, 8, 8, rng.uniform());
    CHECK(jaccard(a, b) == oracle::brute_jaccard(a, b));
    CHECK(jaccard(a, b) == jaccard(b, a));
  }
}

TEST_CASE("boundary definition") {
  const auto b = mask_boundary(rect(6, 6, 1, 1, 5, 5));
  CHECK(b.area() == 12);
  CHECK(b.at(2, 2) == 0);
  // the image border is not background
  const auto full = mask_boundary(rect(4, 4, 0, 0, 4, 4));
  CHECK(full.area() == 0);
  CHECK(default_boundary_tolerance(480, 854) == 8);
  CHECK(default_boundary_tolerance(8, 8) == 1);
}

TEST_CASE("boundary F closed forms") {
  const auto a = rect(20, 20, 2, 2, 8, 8);
  CHECK(boundary_f(a, a, 1) == 1.0);
  CHECK(boundary_f(a, rect(20, 20, 12, 12, 18, 18), 2) == 0.0);
  CHECK(boundary_f(PixelMask(5, 5), PixelMask(5, 5), 1) == 1.0);
  CHECK(boundary_f(a, PixelMask(20, 20), 1) == 0.0);
}

TEST_CASE("shifted square against the O(B^2) oracle") {
  const auto gt = rect(24, 24, 6, 6, 16, 16);
  const auto pred = rect(24, 24, 6, 7, 16, 17);
  for (std::size_t tol : {0, 1, 2, 3}) {
    CHECK(boundary_f(pred, gt, tol) == doctest::Approx(oracle::brute_boundary_f(pred, gt, tol)).epsilon(1e-15));
  }
  CHECK(boundary_f(pred, gt, 2) == 1.0);
}

TEST_CASE("boundary F matches brute force on random masks, symmetric") {
  testing::Normal rng(52);
  for (int trial = 0; trial < 150; ++trial) {
    const auto a = random_mask(rng, 8 + rng.next() % 6, 9, rng.uniform());
    const auto b = random_mask(rng, a.height, a.width, rng.uniform());
    const std::size_t tol = rng.next() % 4;
    CHECK(boundary_f(a, b, tol) == doctest::Approx(oracle::brute_boundary_f(a, b, tol)).epsilon(1e-12));
    CHECK(boundary_f(a, b, tol) == doctest::Approx(boundary_f(b, a, tol)).epsilon(1e-12));
  }
}

TEST_CASE("F-beta closed forms") {
  CHECK(f_beta(1.0, 0.5) == doctest::Approx(0.8125).epsilon(1e-15));
  CHECK(f_beta(1.0, 1.0) == 1.0);
  CHECK(f_beta(0.0, 0.0) == 0.0);

  // thresholds give (P, R) = (2/3, 1), (1/2, 1/2) and (1, 1/2); the last wins
  PixelMask gt(1, 4);
  gt.data = {1, 1, 0, 0};
  const std::vector<double> soft{0.9, 0.1, 0.5, 0.0};
  CHECK(max_f_beta(soft, gt) == doctest::Approx(0.8125).epsilon(1e-15));

  // the ground truth as a soft mask
  std::vector<double> as_soft(gt.data.begin(), gt.data.end());
  CHECK(max_f_beta(as_soft, gt) == 1.0);
}

TEST_CASE("max F-beta matches the threshold brute force") {
  testing::Normal rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gt = random_mask(rng, 8, 8, rng.uniform());
    std::vector<double> soft(64);
    for (auto& v : soft) {
      // mix of arbitrary values and exact threshold values
      v = trial % 2 ? rng.uniform() : static_cast<double>(rng.next() % 257) / 256.0;
    }
    CHECK(std::abs(max_f_beta(soft, gt) - oracle::brute_max_f_beta(soft, gt, 0.3)) <= 1e-9);
  }
}

TEST_CASE("merge masks") {
  const auto a = rect(6, 6, 0, 0, 2, 2), b = rect(6, 6, 3, 3, 6, 6);
  const std::vector<PixelMask> one{a};
  CHECK(merge_masks(one).data == a.data);
  const std::vector<PixelMask> two{a, b};
  CHECK(merge_masks(two).area() == a.area() + b.area());
  const auto big = rect(6, 6, 0, 0, 3, 3);
  const std::vector<PixelMask> nested{a, big};
  CHECK(merge_masks(nested).data == big.data);
  CHECK_THROWS_AS(merge_masks(std::vector<PixelMask>{}), ArgumentError);
}

TEST_CASE("aggregation modes") {
  std::vector<FrameScore> frames{{"A", "0", 1.0, 1.0, 1.0, 1.0, true},
                                 {"A", "1", 0.0, 0.0, 0.5, 0.0, true},
                                 {"B", "0", 1.0, 1.0, 1.0, 1.0, true},
                                 {"B", "1", 0.2, 0.2, 0.2, 0.2, false}};
  const auto seq = aggregate(frames, AveragingMode::sequence_average);
  const auto frm = aggregate(frames, AveragingMode::frame_average);
  CHECK(seq.dataset_j == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(frm.dataset_j == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(seq.per_frame.size() == 3);
  CHECK(seq.per_sequence.size() == 2);

  std::vector<FrameScore> single{frames[0], frames[1]};
  CHECK(aggregate(single, AveragingMode::sequence_average).dataset_j ==
        aggregate(single, AveragingMode::frame_average).dataset_j);

  // permutation invariance
  std::vector<FrameScore> shuffled{frames[2], frames[3], frames[1], frames[0]};
  const auto again = aggregate(shuffled, AveragingMode::sequence_average);
  CHECK(again.dataset_j == doctest::Approx(seq.dataset_j).epsilon(1e-15));
  CHECK(again.dataset_f == doctest::Approx(seq.dataset_f).epsilon(1e-15));

  std::vector<FrameScore> none{frames[3]};
  CHECK_THROWS_AS(aggregate(none, AveragingMode::frame_average), ArgumentError);
}

TEST_CASE("score_frame resizes predictions to the ground truth") {
  const auto gt = rect(8, 8, 0, 0, 4, 8);
  const auto pred = rect(4, 4, 0, 0, 2, 4);
  const auto s = score_frame("s", "f", pred, gt);
  CHECK(s.jaccard == 1.0);
  CHECK(s.boundary_f == 1.0);
  CHECK(s.accuracy == 1.0);
  CHECK(s.max_f_beta == 1.0);
}

TEST_CASE("report JSON has four-decimal values") {
  std::vector<FrameScore> frames{{"A", "0", 1.0 / 3.0, 0.123456, 0.5, 2.0 / 3.0, true}};
  const auto j = nlohmann::json::parse(report_to_json(aggregate(frames, AveragingMode::frame_average)));
  CHECK(j["averaging_mode"] == "frame_average");
  CHECK(j["dataset_J"].get<double>() == 0.3333);
  CHECK(j["dataset_F"].get<double>() == 0.1235);
  CHECK(j["max_f_beta"].get<double>() == 0.6667);
  CHECK(j["per_frame"][0]["sequence"] == "A");
}
