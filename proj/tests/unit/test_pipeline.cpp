#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/pipeline.hpp"
#include "synthetic.hpp"

using namespace flowcut;
namespace fs = std::filesystem;

namespace {

RunConfig config_for(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.dataset_root = data;
  c.output_root = out;
  return c;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("segment writes every frame, a snapshot and a log") {
  const auto root = testing::scratch_dir("pipeline_segment");
  const auto ds = testing::make_planted_dataset(root / "data", {});
  auto cfg = config_for(root / "data", root / "out");
  std::ostringstream summary;
  CHECK(cmd_segment(cfg, summary) == 0);
  CHECK(fs::exists(root / "out" / "config.json"));
  const auto masks = list_mask_tree(root / "out" / "masks");
  CHECK(masks.size() == 6);
  const auto lines = read_lines(root / "out" / "log.jsonl");
  REQUIRE(lines.size() == 6);
  const auto first = nlohmann::json::parse(lines[0]);
  CHECK(first["sequence"] == "seq0");
  CHECK(first["frame"] == "00000");
  CHECK(first["status"] == "ok");
  CHECK(first.contains("ncut"));
  // planted clusters with CRF on the two-tone frames
  for (const auto& [key, gt] : ds.ground_truth) CHECK(read_mask_file(masks.at(key)).data == gt.data);
}

TEST_CASE("planted clusters are recovered without CRF") {
  const auto root = testing::scratch_dir("pipeline_planted");
  testing::PlantedSpec spec;
  spec.write_images = false;
  const auto ds = testing::make_planted_dataset(root / "data", spec);
  auto cfg = config_for(root / "data", root / "out");
  cfg.use_crf = false;
  std::ostringstream summary;
  CHECK(cmd_segment(cfg, summary) == 0);
  for (const auto& [key, gt] : ds.ground_truth) {
    CHECK(read_mask_file(root / "out" / "masks" / (key + ".npy")).data == gt.data);
  }
}

TEST_CASE("frame failures are logged and the run continues") {
  const auto root = testing::scratch_dir("pipeline_partial");
  testing::PlantedSpec spec;
  spec.write_images = false;
  testing::make_planted_dataset(root / "data", spec);
  // corrupt one appearance file
  std::ofstream(root / "data" / "feat_app" / "seq1" / "00001.npy", std::ios::trunc) << "garbage";
  auto cfg = config_for(root / "data", root / "out");
  cfg.use_crf = false;
  std::ostringstream summary;
  CHECK(cmd_segment(cfg, summary) == 1);
  CHECK(list_mask_tree(root / "out" / "masks").size() == 5);
  CHECK(summary.str().find("seq1/00001") != std::string::npos);
  const auto lines = read_lines(root / "out" / "log.jsonl");
  CHECK(nlohmann::json::parse(lines[4])["status"] == "error");

  // CRF without frame images fails every frame
  cfg.use_crf = true;
  cfg.output_root = root / "out_crf";
  CHECK(cmd_segment(cfg, summary) == 1);
}

TEST_CASE("thread count does not change outputs") {
  const auto root = testing::scratch_dir("pipeline_threads");
  testing::make_planted_dataset(root / "data", {});
  auto cfg = config_for(root / "data", root / "one");
  std::ostringstream summary;
  CHECK(cmd_segment(cfg, summary) == 0);
  cfg.output_root = root / "four";
  cfg.threads = 4;
  CHECK(cmd_segment(cfg, summary) == 0);
  CHECK(testing::snapshot_tree(root / "one" / "masks") == testing::snapshot_tree(root / "four" / "masks"));
  CHECK(read_lines(root / "one" / "log.jsonl") == read_lines(root / "four" / "log.jsonl"));
}

TEST_CASE("alpha 1 ignores flow files") {
  const auto root = testing::scratch_dir("pipeline_alpha");
  testing::PlantedSpec spec;
  spec.write_images = false;
  testing::make_planted_dataset(root / "data", spec);
  auto cfg = config_for(root / "data", root / "a");
  cfg.use_crf = false;
  cfg.affinity.alpha = 1.0;
  std::ostringstream summary;
  CHECK(cmd_segment(cfg, summary) == 0);
  // rotate the flow files within each sequence
  for (const char* seq : {"seq0", "seq1"}) {
    const auto d = root / "data" / "feat_flow" / seq;
    fs::rename(d / "00000.npy", d / "tmp.npy");
    fs::rename(d / "00001.npy", d / "00000.npy");
    fs::rename(d / "00002.npy", d / "00001.npy");
    fs::rename(d / "tmp.npy", d / "00002.npy");
  }
  cfg.output_root = root / "b";
  CHECK(cmd_segment(cfg, summary) == 0);
  CHECK(testing::snapshot_tree(root / "a" / "masks") == testing::snapshot_tree(root / "b" / "masks"));
}

TEST_CASE("evaluate") {
  const auto root = testing::scratch_dir("pipeline_evaluate");
  const auto ds = testing::make_planted_dataset(root / "data", {});

  SUBCASE("prediction equal to ground truth") {
    testing::write_mask_tree(root / "pred", ds.ground_truth);
    const auto r = evaluate_directories(root / "pred", root / "data" / "gt", AveragingMode::sequence_average);
    CHECK(r.dataset_j == 1.0);
    CHECK(r.dataset_f == 1.0);
    std::ostringstream out;
    CHECK(cmd_evaluate(root / "pred", root / "data" / "gt", AveragingMode::frame_average, out,
                       root / "report.json") == 0);
    CHECK(nlohmann::json::parse(out.str())["dataset_J"] == 1.0);
    CHECK(fs::exists(root / "report.json"));
  }
  SUBCASE("empty prediction directory lists the missing frames") {
    fs::create_directories(root / "empty");
    try {
      evaluate_directories(root / "empty", root / "data" / "gt", AveragingMode::sequence_average);
      FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
      const std::string what = e.what();
      CHECK(what.find("6 frame(s)") != std::string::npos);
      CHECK(what.find("seq0/00000") != std::string::npos);
      CHECK(what.find("seq1/00002") != std::string::npos);
    }
  }
}

TEST_CASE("hand-computed scores on three tiny masks") {
  const auto root = testing::scratch_dir("pipeline_hand");
  // 4x4 masks; tolerance ceil(0.008 * sqrt(32)) = 1
  auto mask = [](std::initializer_list<int> bits) {
    PixelMask m(4, 4);
    std::size_t i = 0;
    for (int b : bits) m.data[i++] = static_cast<std::uint8_t>(b);
    return m;
  };
  // a: gt 2x2 block, pred identical -> J 1, F 1
  // b: gt left two columns (8 px), pred left column (4 px) -> J 0.5
  //    gt boundary = column 1 (4 px), pred boundary = column 0 (4 px), all within 1 px -> F 1
  // c: gt top-left pixel, pred bottom-right pixel -> J 0, F 0
  const std::map<std::string, PixelMask> gt{
      {"s/a", mask({1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0})},
      {"s/b", mask({1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0})},
      {"t/c", mask({1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0})}};
  const std::map<std::string, PixelMask> pred{
      {"s/a", gt.at("s/a")},
      {"s/b", mask({1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0})},
      {"t/c", mask({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1})}};
  testing::write_mask_tree(root / "gt", gt);
  testing::write_mask_tree(root / "pred", pred);

  std::ostringstream out;
  cmd_evaluate(root / "pred", root / "gt", AveragingMode::sequence_average, out);
  const auto j = nlohmann::json::parse(out.str());
  // sequence s: J (1 + 0.5)/2 = 0.75, F 1; sequence t: J 0, F 0
  CHECK(j["dataset_J"].get<double>() == 0.375);
  CHECK(j["dataset_F"].get<double>() == 0.5);
  // accuracy: 1, 12/16, 14/16 -> 0.875
  CHECK(j["accuracy"].get<double>() == 0.875);

  std::ostringstream frame_out;
  cmd_evaluate(root / "pred", root / "gt", AveragingMode::frame_average, frame_out);
  const auto f = nlohmann::json::parse(frame_out.str());
  CHECK(f["dataset_J"].get<double>() == 0.5);
  CHECK(f["dataset_F"].get<double>() == 0.6667);
}

TEST_CASE("selftrain with zero rounds keeps only graph-cut masks") {
  const auto root = testing::scratch_dir("pipeline_selftrain0");
  testing::PlantedSpec spec;
  spec.write_images = false;
  testing::make_planted_dataset(root / "data", spec);
  auto cfg = config_for(root / "data", root / "out");
  cfg.use_crf = false;
  cfg.selftrain.rounds = 0;
  std::ostringstream summary;
  CHECK(cmd_selftrain(cfg, summary) == 0);
  const auto run = root / "out" / "runs" / "default";
  CHECK(fs::exists(run / "config.json"));
  CHECK(list_mask_tree(run / "round_0" / "masks").size() == 6);
  CHECK(fs::exists(run / "round_0" / "report.json"));
  CHECK_FALSE(fs::exists(run / "round_1"));
}

TEST_CASE("selftrain rounds and early stop") {
  const auto root = testing::scratch_dir("pipeline_selftrain");
  testing::PlantedSpec spec;
  spec.write_images = false;
  testing::make_planted_dataset(root / "data", spec);
  auto cfg = config_for(root / "data", root / "out");
  cfg.use_crf = false;
  cfg.selftrain.rounds = 2;
  std::ostringstream summary;
  CHECK(cmd_selftrain(cfg, summary) == 0);
  const auto run = root / "out" / "runs" / "default";
  for (const char* r : {"round_1", "round_2"}) {
    CHECK(list_mask_tree(run / r / "masks").size() == 6);
    CHECK(fs::exists(run / r / "probe.json"));
    CHECK(fs::exists(run / r / "report.json"));
  }
  const auto probe = nlohmann::json::parse(std::ifstream(run / "round_1" / "probe.json"));
  CHECK(probe["config_hash"] == config_hash(cfg));

  cfg.run_name = "early";
  cfg.selftrain.rounds = 5;
  cfg.selftrain.early_stop_fraction = 0.001;
  std::ostringstream s2;
  CHECK(cmd_selftrain(cfg, s2) == 0);
  // graph cut is exact on this fixture, so nothing changes after round 1
  CHECK(fs::exists(root / "out" / "runs" / "early" / "round_1"));
  CHECK_FALSE(fs::exists(root / "out" / "runs" / "early" / "round_2"));
  CHECK(s2.str().find("early stop") != std::string::npos);
}

TEST_CASE("selftrain from supplied initial masks") {
  const auto root = testing::scratch_dir("pipeline_initial");
  testing::PlantedSpec spec;
  spec.write_images = false;
  const auto ds = testing::make_planted_dataset(root / "data", spec);
  testing::write_mask_tree(root / "init", ds.ground_truth);
  auto cfg = config_for(root / "data", root / "out");
  cfg.initial_masks = root / "init";
  cfg.selftrain.rounds = 1;
  std::ostringstream summary;
  CHECK(cmd_selftrain(cfg, summary) == 0);
  CHECK(testing::snapshot_tree(root / "out" / "runs" / "default" / "round_0" / "masks") ==
        testing::snapshot_tree(root / "init"));

  fs::remove(root / "init" / "seq0" / "00001.npy");
  CHECK_THROWS_AS(cmd_selftrain(cfg, summary), RoundError);
}

TEST_CASE("flow2rgb over a directory tree") {
  const auto root = testing::scratch_dir("pipeline_flow2rgb");
  write_flow_array(root / "in" / "s" / "0.npy", FlowField{2, 3, std::vector<float>(6, 0), std::vector<float>(6, 0)});
  write_flow_array(root / "in" / "s" / "1.npy", FlowField{2, 2, {1, 0, -1, 0}, {0, 1, 0, -1}});
  std::ostringstream summary;
  CHECK(cmd_flow2rgb(root / "in", root / "out", std::nullopt, 2, summary) == 0);
  const auto img = read_rgb_image(root / "out" / "s" / "0.png");
  CHECK(img.height == 2);
  CHECK(img.width == 3);
  for (auto v : img.data) CHECK(v == 255);
  CHECK(fs::exists(root / "out" / "s" / "1.png"));

  std::ofstream(root / "in" / "broken.npy") << "x";
  CHECK(cmd_flow2rgb(root / "in", root / "out2", std::nullopt, 1, summary) == 1);
}

TEST_CASE("ensemble of run directories") {
  const auto root = testing::scratch_dir("pipeline_ensemble");
  testing::Normal rng(81);
  std::vector<fs::path> inputs;
  std::vector<std::map<std::string, PixelMask>> runs;
  for (int r = 0; r < 5; ++r) {
    std::map<std::string, PixelMask> masks;
    for (const char* key : {"a/00", "a/01", "b/00"}) {
      PixelMask m(4, 5);
      for (auto& v : m.data) v = rng.next() & 1;
      masks.emplace(key, m);
    }
    const auto dir = root / ("run" + std::to_string(r));
    testing::write_mask_tree(dir / "masks", masks);  // run layout with masks/
    inputs.push_back(dir);
    runs.push_back(masks);
  }
  std::ostringstream summary;
  CHECK(cmd_ensemble(inputs, root / "merged", summary) == 0);
  const auto merged = list_mask_tree(root / "merged");
  REQUIRE(merged.size() == 3);
  for (const auto& [key, path] : merged) {
    std::vector<PixelMask> all;
    for (const auto& r : runs) all.push_back(r.at(key));
    CHECK(read_mask_file(path).data == ensemble_vote(all).data);
  }

  fs::remove(inputs[2] / "masks" / "a" / "01.npy");
  CHECK_THROWS_AS(cmd_ensemble(inputs, root / "bad", summary), ArgumentError);
  CHECK_THROWS_AS(cmd_ensemble({inputs[0], inputs[1]}, root / "bad", summary), ArgumentError);
}
