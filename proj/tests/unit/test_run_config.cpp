#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/run_config.hpp"
#include "synthetic.hpp"

using namespace flowcut;

TEST_CASE("JSON round-trip keeps every field") {
  RunConfig c;
  c.dataset_root = "/data/x";
  c.output_root = "/out/y";
  c.affinity.alpha = 0.4;
  c.affinity.tau = 0.3;
  c.affinity.self_loops = false;
  c.affinity.precision = WeightPrecision::float64;
  c.crf.iterations = 4;
  c.crf.theta_beta = 7.5;
  c.crf.backend = CrfBackend::approximate;
  c.use_crf = false;
  c.eigen.tol = 1e-9;
  c.corner_block = 2;
  c.selftrain.rounds = 5;
  c.selftrain.probe.lr = 0.3;
  c.selftrain.probe.iterations = 77;
  c.selftrain.probe.init = ProbeInit::seeded_normal;
  c.selftrain.resume = true;
  c.selftrain.early_stop_fraction = 0.001;
  c.run_name = "r";
  c.initial_masks = "/m";
  c.threads = 3;
  c.seed = 99;
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));
}

TEST_CASE("hash ignores threads but not outputs-relevant fields") {
  RunConfig a, b;
  b.threads = 8;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.affinity.tau = 0.26;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("partial JSON keeps defaults; malformed JSON is a ConfigError") {
  const auto c = config_from_json(R"({"affinity": {"alpha": 1.0}, "seed": 4})");
  CHECK(c.affinity.alpha == 1.0);
  CHECK(c.affinity.tau == 0.25);
  CHECK(c.seed == 4);
  CHECK(c.use_crf);
  CHECK_THROWS_AS(config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"affinity": {"alpha": "high"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"crf": {"backend": "gpu"}})"), ConfigError);
}

TEST_CASE("validation") {
  const auto root = testing::scratch_dir("run_config_validate");
  RunConfig c;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no dataset root
  c.dataset_root = root;
  CHECK_NOTHROW(c.validate());
  c.affinity.alpha = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.affinity.alpha = 0.7;
  c.crf.theta_alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.crf.theta_alpha = 60.0;
  c.threads = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.threads = 1;
  c.initial_masks = root / "nope";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("snapshot carries the hash") {
  const auto dir = testing::scratch_dir("run_config_snapshot");
  RunConfig c;
  c.dataset_root = dir;
  write_config_snapshot(c, dir);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "config.json"));
  CHECK(j["config_hash"] == config_hash(c));
  CHECK(config_hash(load_config(dir / "config.json")) == config_hash(c));
}
