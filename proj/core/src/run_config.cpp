#include "flowcut/run_config.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "flowcut/errors.hpp"

namespace flowcut {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void RunConfig::validate() const {
  try {
    affinity.validate();
    crf.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (!(eigen.tol > 0.0)) throw ConfigError("eigen tolerance must be positive");
  if (corner_block == 0) throw ConfigError("corner block must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (!(selftrain.probe.lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (selftrain.early_stop_fraction < 0.0) throw ConfigError("early-stop fraction must be nonnegative");
  if (dataset_root.empty()) throw ConfigError("dataset root is not set");
  if (!fs::is_directory(dataset_root)) throw ConfigError("dataset root " + dataset_root.string() + " does not exist");
  if (initial_masks && !fs::is_directory(*initial_masks)) {
    throw ConfigError("initial mask directory " + initial_masks->string() + " does not exist");
  }
}

namespace {

const char* backend_name(CrfBackend b) {
  switch (b) {
    case CrfBackend::exact: return "exact";
    case CrfBackend::approximate: return "approximate";
    case CrfBackend::automatic: break;
  }
  return "automatic";
}

CrfBackend backend_from(const std::string& s) {
  if (s == "exact") return CrfBackend::exact;
  if (s == "approximate") return CrfBackend::approximate;
  if (s == "automatic") return CrfBackend::automatic;
  throw ConfigError("unknown CRF backend '" + s + "'");
}

ordered_json to_ordered(const RunConfig& c, bool include_runtime) {
  ordered_json j;
  j["dataset_root"] = c.dataset_root.generic_string();
  j["output_root"] = c.output_root.generic_string();
  j["affinity"] = {{"alpha", c.affinity.alpha},
                   {"tau", c.affinity.tau},
                   {"epsilon", c.affinity.epsilon},
                   {"self_loops", c.affinity.self_loops},
                   {"precision", c.affinity.precision == WeightPrecision::float32 ? "float32" : "float64"}};
  j["crf"] = {{"enabled", c.use_crf},
              {"iterations", c.crf.iterations},
              {"w_appearance", c.crf.w_appearance},
              {"w_smoothness", c.crf.w_smoothness},
              {"theta_alpha", c.crf.theta_alpha},
              {"theta_beta", c.crf.theta_beta},
              {"theta_gamma", c.crf.theta_gamma},
              {"unary_confidence", c.crf.unary_confidence},
              {"backend", backend_name(c.crf.backend)},
              {"exact_max_pixels", c.crf.exact_max_pixels}};
  j["spectral"] = {{"eig_tol", c.eigen.tol},
                   {"max_matvecs", c.eigen.max_matvecs},
                   {"max_basis", c.eigen.max_basis},
                   {"kept_ritz", c.eigen.kept_ritz},
                   {"corner_block", c.corner_block}};
  j["selftrain"] = {{"rounds", c.selftrain.rounds},
                    {"lr", c.selftrain.probe.lr},
                    {"iters", c.selftrain.probe.iterations},
                    {"init", c.selftrain.probe.init == ProbeInit::zeros ? "zeros" : "normal"},
                    {"init_stddev", c.selftrain.probe.init_stddev},
                    {"resume", c.selftrain.resume},
                    {"external", c.selftrain.external},
                    {"normalize_features", c.selftrain.normalize_features},
                    {"early_stop_fraction", c.selftrain.early_stop_fraction},
                    {"run_name", c.run_name},
                    {"initial_masks", c.initial_masks ? c.initial_masks->generic_string() : ""}};
  j["seed"] = c.seed;
  if (include_runtime) j["threads"] = c.threads;
  return j;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return to_ordered(cfg, true).dump(2); }

RunConfig config_from_json(const std::string& text) {
  RunConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    std::string s;
    if (j.contains("dataset_root")) c.dataset_root = j["dataset_root"].get<std::string>();
    if (j.contains("output_root")) c.output_root = j["output_root"].get<std::string>();
    if (j.contains("affinity")) {
      const auto& a = j["affinity"];
      maybe(a, "alpha", c.affinity.alpha);
      maybe(a, "tau", c.affinity.tau);
      maybe(a, "epsilon", c.affinity.epsilon);
      maybe(a, "self_loops", c.affinity.self_loops);
      if (a.contains("precision")) {
        s = a["precision"].get<std::string>();
        if (s != "float32" && s != "float64") throw ConfigError("unknown weight precision '" + s + "'");
        c.affinity.precision = s == "float32" ? WeightPrecision::float32 : WeightPrecision::float64;
      }
    }
    if (j.contains("crf")) {
      const auto& r = j["crf"];
      maybe(r, "enabled", c.use_crf);
      maybe(r, "iterations", c.crf.iterations);
      maybe(r, "w_appearance", c.crf.w_appearance);
      maybe(r, "w_smoothness", c.crf.w_smoothness);
      maybe(r, "theta_alpha", c.crf.theta_alpha);
      maybe(r, "theta_beta", c.crf.theta_beta);
      maybe(r, "theta_gamma", c.crf.theta_gamma);
      maybe(r, "unary_confidence", c.crf.unary_confidence);
      maybe(r, "exact_max_pixels", c.crf.exact_max_pixels);
      if (r.contains("backend")) c.crf.backend = backend_from(r["backend"].get<std::string>());
    }
    if (j.contains("spectral")) {
      const auto& e = j["spectral"];
      maybe(e, "eig_tol", c.eigen.tol);
      maybe(e, "max_matvecs", c.eigen.max_matvecs);
      maybe(e, "max_basis", c.eigen.max_basis);
      maybe(e, "kept_ritz", c.eigen.kept_ritz);
      maybe(e, "corner_block", c.corner_block);
    }
    if (j.contains("selftrain")) {
      const auto& t = j["selftrain"];
      maybe(t, "rounds", c.selftrain.rounds);
      maybe(t, "lr", c.selftrain.probe.lr);
      maybe(t, "iters", c.selftrain.probe.iterations);
      maybe(t, "init_stddev", c.selftrain.probe.init_stddev);
      maybe(t, "resume", c.selftrain.resume);
      maybe(t, "external", c.selftrain.external);
      maybe(t, "normalize_features", c.selftrain.normalize_features);
      maybe(t, "early_stop_fraction", c.selftrain.early_stop_fraction);
      maybe(t, "run_name", c.run_name);
      if (t.contains("init")) {
        s = t["init"].get<std::string>();
        if (s != "zeros" && s != "normal") throw ConfigError("unknown probe init '" + s + "'");
        c.selftrain.probe.init = s == "zeros" ? ProbeInit::zeros : ProbeInit::seeded_normal;
      }
      if (t.contains("initial_masks")) {
        s = t["initial_masks"].get<std::string>();
        if (!s.empty()) c.initial_masks = fs::path(s);
      }
    }
    maybe(j, "seed", c.seed);
    maybe(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return config_from_json({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

std::string config_hash(const RunConfig& cfg) {
  const auto text = to_ordered(cfg, false).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_config_snapshot(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  auto j = to_ordered(cfg, true);
  j["config_hash"] = config_hash(cfg);
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "config.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace flowcut
