#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>

#include "flowcut/affinity.hpp"
#include "flowcut/crf.hpp"
#include "flowcut/spectral.hpp"

using namespace flowcut;

namespace {

FeatureGrid random_grid(std::mt19937_64& rng, std::size_t rows, std::size_t cols, std::size_t channels,
                        FeatureKind kind) {
  std::normal_distribution<float> normal;
  FeatureGrid g;
  g.rows = rows;
  g.cols = cols;
  g.channels = channels;
  g.kind = kind;
  g.patch_size = 8;
  g.image_height = rows * 8;
  g.image_width = cols * 8;
  g.data.resize(rows * cols * channels);
  for (auto& v : g.data) v = normal(rng);
  return g;
}

// 480x854 frames at patch size 8 give a 60x106 grid.
void BM_BuildGraph(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = rows * 16 / 9;
  const auto app = random_grid(rng, rows, cols, 384, FeatureKind::appearance);
  const auto flow = random_grid(rng, rows, cols, 384, FeatureKind::flow);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(app, flow, {}));
  state.counters["patches"] = static_cast<double>(rows * cols);
}
BENCHMARK(BM_BuildGraph)->Arg(15)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_GraphCut(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = rows * 16 / 9;
  // two noisy clusters so the cut is meaningful
  auto app = random_grid(rng, rows, cols, 64, FeatureKind::appearance);
  for (std::size_t p = 0; p < rows * cols; ++p) app.data[p * 64 + (p % cols < cols / 2 ? 0 : 1)] += 8.0f;
  auto flow = app;
  flow.kind = FeatureKind::flow;
  const auto graph = build_graph(app, flow, {});
  for (auto _ : state) benchmark::DoNotOptimize(graph_cut(graph, {rows, cols}));
}
BENCHMARK(BM_GraphCut)->Arg(15)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_Crf(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto side = static_cast<std::size_t>(state.range(0));
  RgbImage img(side, side);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  PixelMask mask(side, side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) mask.at(y, x) = x < side / 2;
  }
  CrfParams p;
  p.backend = state.range(1) ? CrfBackend::exact : CrfBackend::approximate;
  for (auto _ : state) benchmark::DoNotOptimize(crf_refine(mask, img, p));
}
BENCHMARK(BM_Crf)->Args({32, 1})->Args({32, 0})->Args({64, 1})->Args({64, 0})->Args({256, 0})
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
