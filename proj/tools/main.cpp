#include "p2pb/cloud_ops.hpp"
#include "p2pb/infer.hpp"
#include "p2pb/io.hpp"
#include "p2pb/metrics.hpp"
#include "p2pb/synth.hpp"
#include "p2pb/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;

int env_threads() {
  const char* raw = std::getenv("P2PB_THREADS");
  if (raw == nullptr) return 1;
  const int v = std::atoi(raw);
  return v < 0 ? 1 : v; // 0 = auto (decided by denoise_cloud)
}

struct SynthArgs {
  std::string shape = "sphere";
  int points = 2048;
  double noise = 0.02;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
  int resolution = 32;
  double size_a = 1.0;
  double size_b = 0.3;
};

int run_synth(const SynthArgs& args) {
  const p2pb::PrimitiveKind kind = p2pb::primitive_kind_from_string(args.shape);
  const p2pb::TriangleMesh mesh =
      p2pb::make_primitive(kind, args.resolution, args.size_a, args.size_b);

  std::vector<p2pb::NoiseSpec> specs(static_cast<std::size_t>(args.count));
  for (int i = 0; i < args.count; ++i) {
    specs[static_cast<std::size_t>(i)] = {args.noise, args.seed};
  }
  std::vector<p2pb::PairedSample> pairs =
      p2pb::build_pairs({mesh}, args.points, specs, args.seed);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%03zu", args.shape.c_str(), i);
    pairs[i].source_id = id;
  }
  p2pb::write_dataset(pairs, args.out);
  std::cout << "wrote " << pairs.size() << " pair(s) to " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::string log;
};

int run_train(const TrainArgs& args) {
  std::ifstream is(args.config);
  if (!is) {
    throw std::runtime_error("cannot open config file: " + args.config);
  }
  json cfg_json;
  try {
    is >> cfg_json;
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid config JSON: " + std::string(e.what()));
  }
  p2pb::TrainConfig cfg = p2pb::train_config_from_json(cfg_json);
  if (args.seed.has_value()) cfg.seed = *args.seed;   // flags override the file
  if (args.steps.has_value()) cfg.steps = *args.steps;

  const std::vector<p2pb::PairedSample> dataset = p2pb::load_dataset(args.data);

  auto sink = [&](int step, const p2pb::DenoiserParams& params) {
    p2pb::save_checkpoint(params.values, p2pb::checkpoint_header(cfg, step, 0.0),
                          args.out);
  };
  const p2pb::TrainResult result = p2pb::train(dataset, cfg, sink);
  const double final_loss = result.log.empty() ? 0.0 : result.log.back().loss;
  p2pb::save_checkpoint(result.params.values,
                        p2pb::checkpoint_header(cfg, cfg.steps, final_loss), args.out);

  const std::string log_path = args.log.empty() ? args.out + ".log.csv" : args.log;
  p2pb::write_train_log_csv(result.log, log_path);

  std::cout << "final loss: " << final_loss << "\n";
  std::cout << "checkpoint: " << args.out << "\n";
  return 0;
}

struct DenoiseArgs {
  std::string input;
  std::string model;
  int steps = 10;
  std::string mode = "ode";
  double radius = 0.5;
  int max_points = 1024;
  std::uint64_t seed = 0;
  std::string out;
};

int run_denoise(const DenoiseArgs& args) {
  const p2pb::Checkpoint ckpt = p2pb::load_checkpoint(args.model);
  const p2pb::DenoiserConfig cfg = p2pb::denoiser_config_from_header(ckpt.header);
  const p2pb::BridgeSchedule schedule = p2pb::schedule_from_header(ckpt.header);

  p2pb::DenoiserParams params;
  params.layout = p2pb::ParamLayout::make(cfg);
  if (params.layout.total != ckpt.params.size()) {
    throw std::runtime_error("checkpoint payload does not match its architecture");
  }
  params.values = ckpt.params;

  const p2pb::PointCloud cloud = p2pb::read_ply_cloud(args.input);
  p2pb::PatchConfig patch_cfg;
  patch_cfg.radius = args.radius;
  patch_cfg.max_points = args.max_points;
  patch_cfg.seed = args.seed;

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<p2pb::Patch> patches = p2pb::extract_patches(cloud, patch_cfg);
  const p2pb::PointCloud denoised = p2pb::denoise_cloud(
      params, cfg, schedule, cloud, patch_cfg, args.steps, args.mode == "sde",
      args.seed, env_threads());
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();

  p2pb::write_ply(denoised, args.out, /*binary=*/true);
  std::cout << "patches=" << patches.size() << " steps=" << args.steps
            << " wall_ms=" << ms << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string mesh;
  bool no_normalize = false;
  double scale = 1e4;
  std::string json_out;
};

int run_eval(const EvalArgs& args) {
  const p2pb::PointCloud pred = p2pb::read_ply_cloud(args.pred);
  const p2pb::PointCloud gt = p2pb::read_ply_cloud(args.gt);

  std::optional<p2pb::TriangleMesh> mesh;
  if (!args.mesh.empty()) {
    if (args.mesh.size() >= 4 && args.mesh.substr(args.mesh.size() - 4) == ".obj") {
      mesh = p2pb::read_obj(args.mesh);
    } else {
      mesh = p2pb::read_ply_mesh(args.mesh);
    }
  }

  const p2pb::MetricReport report = p2pb::evaluate(
      pred, gt, mesh.has_value() ? &*mesh : nullptr, !args.no_normalize, args.scale);
  std::cout << p2pb::format_report(report);

  if (!args.json_out.empty()) {
    json j;
    j["cd"] = report.cd;
    j["cd_forward"] = report.cd_forward;
    j["cd_backward"] = report.cd_backward;
    if (report.p2m.has_value()) {
      j["p2m"] = *report.p2m;
      j["p2f"] = *report.p2f;
      j["f2p"] = *report.f2p;
    }
    j["scale"] = report.scale_factor;
    std::ofstream os(args.json_out);
    if (!os) {
      throw std::runtime_error("cannot open JSON output: " + args.json_out);
    }
    os << j.dump(2) << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud denoising with a data-to-data diffusion bridge"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "fabricate noisy/clean pairs");
  synth_cmd->add_option("--shape", synth.shape, "sphere, torus or box")
      ->check(CLI::IsMember({"sphere", "torus", "box"}));
  synth_cmd->add_option("--points", synth.points, "points per cloud");
  synth_cmd->add_option("--noise", synth.noise, "noise std as a fraction of bbox diagonal");
  synth_cmd->add_option("--count", synth.count, "number of pairs");
  synth_cmd->add_option("--seed", synth.seed, "rng seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--resolution", synth.resolution, "mesh resolution");
  synth_cmd->add_option("--size", synth.size_a, "primary size (radius / edge)");
  synth_cmd->add_option("--minor", synth.size_b, "torus minor radius");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the denoiser");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--config", train.config, "JSON run config")->required();
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  std::uint64_t train_seed = 0;
  int train_steps = 0;
  CLI::Option* seed_opt = train_cmd->add_option("--seed", train_seed, "overrides config seed");
  CLI::Option* steps_opt = train_cmd->add_option("--steps", train_steps, "overrides config steps");
  train_cmd->add_option("--log", train.log, "CSV log path");

  DenoiseArgs denoise;
  CLI::App* denoise_cmd = app.add_subcommand("denoise", "denoise a point cloud");
  denoise_cmd->add_option("--input", denoise.input, "noisy PLY")->required();
  denoise_cmd->add_option("--model", denoise.model, "checkpoint")->required();
  denoise_cmd->add_option("--steps", denoise.steps, "reverse steps");
  denoise_cmd->add_option("--mode", denoise.mode, "ode (deterministic) or sde")
      ->check(CLI::IsMember({"ode", "sde"}));
  denoise_cmd->add_option("--radius", denoise.radius, "patch radius");
  denoise_cmd->add_option("--max-points", denoise.max_points, "patch point cap");
  denoise_cmd->add_option("--seed", denoise.seed, "rng seed");
  denoise_cmd->add_option("--out", denoise.out, "output PLY")->required();

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a prediction");
  eval_cmd->add_option("--pred", eval.pred, "predicted PLY")->required();
  eval_cmd->add_option("--gt", eval.gt, "ground-truth PLY")->required();
  eval_cmd->add_option("--mesh", eval.mesh, "ground-truth mesh (OBJ or PLY)");
  eval_cmd->add_flag("--no-normalize", eval.no_normalize, "skip unit-sphere normalization");
  eval_cmd->add_option("--scale", eval.scale, "report scale factor");
  eval_cmd->add_option("--json", eval.json_out, "write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (app.got_subcommand(synth_cmd)) return run_synth(synth);
    if (app.got_subcommand(train_cmd)) {
      if (seed_opt->count() > 0) train.seed = train_seed;
      if (steps_opt->count() > 0) train.steps = train_steps;
      return run_train(train);
    }
    if (app.got_subcommand(denoise_cmd)) return run_denoise(denoise);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2; // bad values are usage errors
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
