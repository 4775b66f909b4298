#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowcut/errors.hpp"
#include "flowcut/pipeline.hpp"
#include "flowcut/run_config.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

// Flags that override the config file only when given.
struct Overrides {
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::optional<double> alpha, tau, epsilon;
  std::optional<bool> self_loops;
  std::optional<double> eig_tol;
  std::optional<std::size_t> corner_block;
  std::optional<bool> crf;
  std::optional<std::size_t> crf_iters;
  std::optional<double> crf_w_app, crf_w_smooth, crf_theta_alpha, crf_theta_beta, crf_theta_gamma;
  std::optional<std::string> crf_backend;
  std::optional<std::size_t> rounds, iters;
  std::optional<double> lr, early_stop;
  std::optional<std::string> init, run_name, initial_masks;
  bool resume = false;
  bool external = false;
};

void add_graph_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--dataset", o.dataset, "Dataset root (contains dataset.toml)");
  cmd->add_option("--out", o.out, "Output root");
  cmd->add_option("--alpha", o.alpha, "Appearance share of the combined similarity");
  cmd->add_option("--tau", o.tau, "Similarity threshold");
  cmd->add_option("--epsilon", o.epsilon, "Weight below the threshold");
  cmd->add_flag("--self-loops,!--no-self-loops", o.self_loops, "Keep W_ii = 1");
  cmd->add_option("--eig-tol", o.eig_tol, "Relative residual tolerance of the eigensolver");
  cmd->add_option("--corner-block", o.corner_block, "Corner block size (patches) for the foreground rule");
  cmd->add_flag("--crf,!--no-crf", o.crf, "Refine masks with the dense CRF");
  cmd->add_option("--crf-iters", o.crf_iters, "Mean-field iterations");
  cmd->add_option("--crf-w-app", o.crf_w_app, "Appearance kernel weight");
  cmd->add_option("--crf-w-smooth", o.crf_w_smooth, "Smoothness kernel weight");
  cmd->add_option("--crf-theta-alpha", o.crf_theta_alpha, "Appearance kernel spatial stddev (px)");
  cmd->add_option("--crf-theta-beta", o.crf_theta_beta, "Appearance kernel colour stddev");
  cmd->add_option("--crf-theta-gamma", o.crf_theta_gamma, "Smoothness kernel spatial stddev (px)");
  cmd->add_option("--crf-backend", o.crf_backend, "automatic, exact or approximate")
      ->check(CLI::IsMember({"automatic", "exact", "approximate"}));
}

void add_selftrain_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--rounds", o.rounds, "Self-training rounds after the graph-cut round");
  cmd->add_option("--lr", o.lr, "Probe learning rate");
  cmd->add_option("--iters", o.iters, "Gradient steps per round");
  cmd->add_option("--init", o.init, "Probe initialisation: zeros or normal")->check(CLI::IsMember({"zeros", "normal"}));
  cmd->add_option("--early-stop", o.early_stop, "Stop when fewer than this fraction of pixels change");
  cmd->add_option("--run-name", o.run_name, "Directory name under <out>/runs");
  cmd->add_option("--initial-masks", o.initial_masks, "Round-0 masks instead of running the graph cut");
  cmd->add_flag("--resume", o.resume, "Warm-start each round from the previous probe");
  cmd->add_flag("--external", o.external, "Exchange pseudo-GT with an external trainer");
}

template <typename T, typename U>
void apply(const std::optional<T>& value, U& target) {
  if (value) target = *value;
}

void apply_overrides(const Overrides& o, flowcut::RunConfig& cfg) {
  apply(o.dataset, cfg.dataset_root);
  apply(o.out, cfg.output_root);
  apply(o.alpha, cfg.affinity.alpha);
  apply(o.tau, cfg.affinity.tau);
  apply(o.epsilon, cfg.affinity.epsilon);
  apply(o.self_loops, cfg.affinity.self_loops);
  apply(o.eig_tol, cfg.eigen.tol);
  apply(o.corner_block, cfg.corner_block);
  apply(o.crf, cfg.use_crf);
  apply(o.crf_iters, cfg.crf.iterations);
  apply(o.crf_w_app, cfg.crf.w_appearance);
  apply(o.crf_w_smooth, cfg.crf.w_smoothness);
  apply(o.crf_theta_alpha, cfg.crf.theta_alpha);
  apply(o.crf_theta_beta, cfg.crf.theta_beta);
  apply(o.crf_theta_gamma, cfg.crf.theta_gamma);
  if (o.crf_backend) {
    cfg.crf.backend = *o.crf_backend == "exact"         ? flowcut::CrfBackend::exact
                      : *o.crf_backend == "approximate" ? flowcut::CrfBackend::approximate
                                                        : flowcut::CrfBackend::automatic;
  }
  apply(o.rounds, cfg.selftrain.rounds);
  apply(o.lr, cfg.selftrain.probe.lr);
  apply(o.iters, cfg.selftrain.probe.iterations);
  apply(o.early_stop, cfg.selftrain.early_stop_fraction);
  if (o.init) {
    cfg.selftrain.probe.init = *o.init == "zeros" ? flowcut::ProbeInit::zeros : flowcut::ProbeInit::seeded_normal;
  }
  apply(o.run_name, cfg.run_name);
  if (o.initial_masks) cfg.initial_masks = *o.initial_masks;
  if (o.resume) cfg.selftrain.resume = true;
  if (o.external) cfg.selftrain.external = true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised video object segmentation by normalized graph cut"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "flowcut 0.1.0");

  std::optional<std::string> config_path;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "Worker threads for per-frame work")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Random seed");

  Overrides o;
  auto* segment = app.add_subcommand("segment", "Graph-cut masks for every frame of a dataset");
  add_graph_flags(segment, o);

  auto* selftrain = app.add_subcommand("selftrain", "Graph cut followed by self-training rounds");
  add_graph_flags(selftrain, o);
  add_selftrain_flags(selftrain, o);

  std::string pred_dir, gt_dir, mode = "seq";
  std::optional<std::string> report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  evaluate->add_option("--pred", pred_dir, "Predicted mask tree")->required();
  evaluate->add_option("--gt", gt_dir, "Ground-truth mask tree")->required();
  evaluate->add_option("--mode", mode, "Averaging: seq or frame")
      ->check(CLI::IsMember({"seq", "sequence", "sequence_average", "frame", "frame_average"}));
  evaluate->add_option("--report", report_path, "Also write the report to this file");

  std::string flow_in, flow_out;
  std::optional<double> max_magnitude;
  auto* flow2rgb = app.add_subcommand("flow2rgb", "Colour-wheel PNGs from (H,W,2) flow arrays");
  flow2rgb->add_option("--in", flow_in, "Directory of flow arrays")->required();
  flow2rgb->add_option("--out", flow_out, "Output directory")->required();
  flow2rgb->add_option("--max-magnitude", max_magnitude, "Fixed normalisation (default: per-frame maximum)");

  std::vector<std::string> inputs;
  std::string ensemble_out;
  auto* ensemble = app.add_subcommand("ensemble", "Pixelwise majority vote over mask trees");
  ensemble->add_option("--inputs", inputs, "Mask trees or run/round directories")->delimiter(',')->required();
  ensemble->add_option("--out", ensemble_out, "Output mask tree")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto build_config = [&] {
      flowcut::RunConfig cfg = config_path ? flowcut::load_config(*config_path) : flowcut::RunConfig{};
      apply_overrides(o, cfg);
      if (threads) cfg.threads = *threads;
      if (seed) cfg.seed = *seed;
      return cfg;
    };

    if (segment->parsed()) return flowcut::cmd_segment(build_config(), std::cerr);
    if (selftrain->parsed()) return flowcut::cmd_selftrain(build_config(), std::cerr);
    if (evaluate->parsed()) {
      std::optional<std::filesystem::path> report;
      if (report_path) report = *report_path;
      return flowcut::cmd_evaluate(pred_dir, gt_dir, flowcut::parse_averaging_mode(mode), std::cout, report);
    }
    if (flow2rgb->parsed()) {
      return flowcut::cmd_flow2rgb(flow_in, flow_out, max_magnitude, threads.value_or(1), std::cerr);
    }
    if (ensemble->parsed()) {
      std::vector<std::filesystem::path> dirs(inputs.begin(), inputs.end());
      return flowcut::cmd_ensemble(dirs, ensemble_out, std::cerr);
    }
  } catch (const flowcut::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const flowcut::ManifestError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const flowcut::ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
