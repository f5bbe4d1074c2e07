#include "p2pb/train.hpp"

#include "p2pb/cloud_ops.hpp"
#include "p2pb/kdtree.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace p2pb {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

} // namespace

void TrainConfig::validate() const {
  schedule.validate();
  denoiser.validate();
  if (!(lr > 0.0) || !(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw std::invalid_argument("TrainConfig: bad optimizer hyperparameters");
  }
  if (batch_patches < 1 || patch_points < 1 || steps < 1) {
    throw std::invalid_argument(
        "TrainConfig: batch_patches, patch_points and steps must be >= 1");
  }
  if (!(patch_radius > 0.0)) {
    throw std::invalid_argument("TrainConfig: patch_radius must be positive");
  }
  if (checkpoint_interval < 0) {
    throw std::invalid_argument("TrainConfig: checkpoint_interval must be >= 0");
  }
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  reject_unknown_keys(j, {"schedule", "denoiser", "train"}, "top level");
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    reject_unknown_keys(s, {"beta_min", "beta_max", "steps", "t_min"}, "schedule");
    read_field(s, "beta_min", cfg.schedule.beta_min);
    read_field(s, "beta_max", cfg.schedule.beta_max);
    read_field(s, "steps", cfg.schedule.steps);
    read_field(s, "t_min", cfg.schedule.t_min);
  }
  if (j.contains("denoiser")) {
    const json& d = j.at("denoiser");
    reject_unknown_keys(
        d, {"hidden_width", "knn_k", "num_blocks", "time_dim", "feature_width"},
        "denoiser");
    read_field(d, "hidden_width", cfg.denoiser.hidden_width);
    read_field(d, "knn_k", cfg.denoiser.knn_k);
    read_field(d, "num_blocks", cfg.denoiser.num_blocks);
    read_field(d, "time_dim", cfg.denoiser.time_dim);
    read_field(d, "feature_width", cfg.denoiser.feature_width);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown_keys(t,
                        {"lr", "adam_beta1", "adam_beta2", "adam_eps",
                         "batch_patches", "patch_points", "steps", "seed",
                         "patch_radius", "checkpoint_interval", "shuffle_clean"},
                        "train");
    read_field(t, "lr", cfg.lr);
    read_field(t, "adam_beta1", cfg.adam_beta1);
    read_field(t, "adam_beta2", cfg.adam_beta2);
    read_field(t, "adam_eps", cfg.adam_eps);
    read_field(t, "batch_patches", cfg.batch_patches);
    read_field(t, "patch_points", cfg.patch_points);
    read_field(t, "steps", cfg.steps);
    read_field(t, "seed", cfg.seed);
    read_field(t, "patch_radius", cfg.patch_radius);
    read_field(t, "checkpoint_interval", cfg.checkpoint_interval);
    read_field(t, "shuffle_clean", cfg.shuffle_clean);
  }
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["schedule"] = {{"beta_min", cfg.schedule.beta_min},
                   {"beta_max", cfg.schedule.beta_max},
                   {"steps", cfg.schedule.steps},
                   {"t_min", cfg.schedule.t_min}};
  j["denoiser"] = {{"hidden_width", cfg.denoiser.hidden_width},
                   {"knn_k", cfg.denoiser.knn_k},
                   {"num_blocks", cfg.denoiser.num_blocks},
                   {"time_dim", cfg.denoiser.time_dim},
                   {"feature_width", cfg.denoiser.feature_width}};
  j["train"] = {{"lr", cfg.lr},
                {"adam_beta1", cfg.adam_beta1},
                {"adam_beta2", cfg.adam_beta2},
                {"adam_eps", cfg.adam_eps},
                {"batch_patches", cfg.batch_patches},
                {"patch_points", cfg.patch_points},
                {"steps", cfg.steps},
                {"seed", cfg.seed},
                {"patch_radius", cfg.patch_radius},
                {"checkpoint_interval", cfg.checkpoint_interval},
                {"shuffle_clean", cfg.shuffle_clean}};
  return j;
}

json checkpoint_header(const TrainConfig& cfg, int trained_steps, double final_loss) {
  json h;
  h["denoiser"] = train_config_to_json(cfg)["denoiser"];
  h["schedule"] = train_config_to_json(cfg)["schedule"];
  h["train_meta"] = {{"steps", trained_steps},
                     {"final_loss", final_loss},
                     {"seed", cfg.seed},
                     {"lr", cfg.lr},
                     {"batch_patches", cfg.batch_patches},
                     {"patch_points", cfg.patch_points},
                     {"patch_radius", cfg.patch_radius}};
  return h;
}

DenoiserConfig denoiser_config_from_header(const json& header) {
  if (!header.contains("denoiser")) {
    throw std::runtime_error("checkpoint header lacks a denoiser section");
  }
  const json& d = header.at("denoiser");
  DenoiserConfig cfg;
  read_field(d, "hidden_width", cfg.hidden_width);
  read_field(d, "knn_k", cfg.knn_k);
  read_field(d, "num_blocks", cfg.num_blocks);
  read_field(d, "time_dim", cfg.time_dim);
  read_field(d, "feature_width", cfg.feature_width);
  cfg.validate();
  return cfg;
}

BridgeSchedule schedule_from_header(const json& header) {
  if (!header.contains("schedule")) {
    throw std::runtime_error("checkpoint header lacks a schedule section");
  }
  const json& s = header.at("schedule");
  BridgeSchedule sched;
  read_field(s, "beta_min", sched.beta_min);
  read_field(s, "beta_max", sched.beta_max);
  read_field(s, "steps", sched.steps);
  read_field(s, "t_min", sched.t_min);
  sched.validate();
  return sched;
}

TrainingExample make_training_example_at(const Eigen::Ref<const MatX3>& clean,
                                         const Eigen::Ref<const MatX3>& noisy,
                                         const BridgeSchedule& s, double t,
                                         const Eigen::Ref<const MatX3>& noise) {
  if (clean.rows() != noisy.rows() || clean.rows() != noise.rows()) {
    throw std::invalid_argument("make_training_example: size mismatch");
  }
  const double sigma_t = std::sqrt(s.sigma2(t));
  if (sigma_t == 0.0) {
    throw std::invalid_argument("make_training_example: sigma_t is zero; t must be >= t_min > 0");
  }
  const PosteriorMoments m = posterior(s, clean, noisy, t);
  TrainingExample ex;
  ex.t = t;
  ex.x_t = m.mu + std::sqrt(m.var) * noise;
  ex.target = (ex.x_t - clean) / sigma_t;
  return ex;
}

TrainingExample make_training_example(const PairedSample& pair,
                                      const BridgeSchedule& s, Rng& rng) {
  const double t = rng.uniform(s.t_min, 1.0);
  MatX3 noise(pair.noisy.size(), 3);
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      noise(i, c) = rng.normal();
    }
  }
  return make_training_example_at(pair.clean_aligned.coords, pair.noisy.coords, s, t,
                                  noise);
}

void adam_step(VecX& params, const VecX& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps, int step_index) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (state.m.size() == 0) {
    state.m = VecX::Zero(params.size());
    state.v = VecX::Zero(params.size());
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state shape mismatch");
  }
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
  const double bias1 = 1.0 - std::pow(beta1, step_index);
  const double bias2 = 1.0 - std::pow(beta2, step_index);
  params.array() -= lr * (state.m.array() / bias1) /
                    ((state.v.array() / bias2).sqrt() + eps);
}

TrainResult train(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                  const std::function<void(int, const DenoiserParams&)>& checkpoint_sink) {
  cfg.validate();
  if (dataset.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  for (const PairedSample& pair : dataset) {
    if (pair.noisy.size() != pair.clean_aligned.size()) {
      throw std::invalid_argument("train: pair '" + pair.source_id +
                                  "' is not aligned (size mismatch)");
    }
    if (pair.noisy.feature_width() != cfg.denoiser.feature_width) {
      throw std::invalid_argument(
          "train: pair '" + pair.source_id + "' feature width " +
          std::to_string(pair.noisy.feature_width()) + " does not match config " +
          std::to_string(cfg.denoiser.feature_width));
    }
  }

  Rng base(cfg.seed);

  // Ablation mode: destroy the alignment with a random permutation per pair.
  std::vector<PairedSample> pairs = dataset;
  if (cfg.shuffle_clean) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      Rng prng = base.derive(0x5fu).derive(p);
      const Eigen::Index n = pairs[p].clean_aligned.size();
      std::vector<int> perm(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
      for (Eigen::Index i = n - 1; i > 0; --i) {
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(prng.uniform_int(static_cast<int>(i) + 1))]);
      }
      Assignment shuffle;
      shuffle.perm = perm;
      pairs[p].clean_aligned = apply_assignment(pairs[p].clean_aligned, shuffle);
    }
  }

  // Patch-center candidates: an FPS ordering per pair, long enough for ~4x
  // coverage overlap; each batch slot picks one uniformly.
  struct PairContext {
    KdTree tree;
    std::vector<int> centers;
  };
  std::vector<PairContext> ctx;
  ctx.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int n = static_cast<int>(pairs[p].noisy.size());
    const int want = std::clamp(4 * n / cfg.patch_points + 1, 1, n);
    Rng crng = base.derive(0xCEu).derive(p);
    ctx.push_back({KdTree(pairs[p].noisy.coords),
                   farthest_point_sampling(pairs[p].noisy.coords, want,
                                           crng.uniform_int(n))});
  }

  DenoiserParams params = init_params(cfg.denoiser, base.derive(0x11u).seed());
  AdamState adam;
  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.steps));

  VecX grad_accum(params.layout.total);
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    grad_accum.setZero();
    double loss_accum = 0.0;
    double entries = 0.0;

    for (int slot = 0; slot < cfg.batch_patches; ++slot) {
      Rng ex_rng = base.derive(static_cast<std::uint64_t>(step)).derive(
          static_cast<std::uint64_t>(slot));
      const int p = ex_rng.uniform_int(static_cast<int>(pairs.size()));
      const PairedSample& pair = pairs[static_cast<std::size_t>(p)];
      const PairContext& pc = ctx[static_cast<std::size_t>(p)];

      const int center = pc.centers[static_cast<std::size_t>(
          ex_rng.uniform_int(static_cast<int>(pc.centers.size())))];
      std::vector<int> crop =
          pc.tree.radius(pair.noisy.coords.row(center).transpose(), cfg.patch_radius);
      if (static_cast<int>(crop.size()) > cfg.patch_points) {
        MatX3 crop_coords(static_cast<Eigen::Index>(crop.size()), 3);
        for (std::size_t i = 0; i < crop.size(); ++i) {
          crop_coords.row(static_cast<Eigen::Index>(i)) =
              pair.noisy.coords.row(crop[i]);
        }
        const int center_pos = static_cast<int>(
            std::lower_bound(crop.begin(), crop.end(), center) - crop.begin());
        const std::vector<int> keep =
            farthest_point_sampling(crop_coords, cfg.patch_points, center_pos);
        std::vector<int> subset;
        subset.reserve(keep.size());
        for (const int pos : keep) subset.push_back(crop[static_cast<std::size_t>(pos)]);
        std::sort(subset.begin(), subset.end());
        crop = std::move(subset);
      }

      const Eigen::Index m = static_cast<Eigen::Index>(crop.size());
      MatX3 noisy_patch(m, 3);
      MatX3 clean_patch(m, 3);
      MatXX feat_patch(m, pair.noisy.feature_width());
      for (Eigen::Index i = 0; i < m; ++i) {
        noisy_patch.row(i) = pair.noisy.coords.row(crop[static_cast<std::size_t>(i)]);
        clean_patch.row(i) =
            pair.clean_aligned.coords.row(crop[static_cast<std::size_t>(i)]);
        if (pair.noisy.has_features()) {
          feat_patch.row(i) = pair.noisy.features.row(crop[static_cast<std::size_t>(i)]);
        }
      }
      const Eigen::RowVector3d centroid = noisy_patch.colwise().mean();
      noisy_patch.rowwise() -= centroid;
      clean_patch.rowwise() -= centroid;

      const double t = ex_rng.uniform(cfg.schedule.t_min, 1.0);
      MatX3 noise(m, 3);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (int c = 0; c < 3; ++c) noise(i, c) = ex_rng.normal();
      }
      const TrainingExample example =
          make_training_example_at(clean_patch, noisy_patch, cfg.schedule, t, noise);

      const PointCloud x_t_cloud(example.x_t, feat_patch);
      const LossGrad lg = denoiser_forward_backward(params, cfg.denoiser, x_t_cloud,
                                                    example.t, example.target);
      const double n_entries = 3.0 * static_cast<double>(m);
      grad_accum += lg.grad * n_entries;
      loss_accum += lg.loss * n_entries;
      entries += n_entries;
    }

    const double loss = loss_accum / entries;
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: loss is not finite at step " +
                               std::to_string(step));
    }
    const VecX grad = grad_accum / entries;
    adam_step(params.values, grad, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
              cfg.adam_eps, step);

    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    result.log.push_back({step, loss, ms});

    if (checkpoint_sink && cfg.checkpoint_interval > 0 &&
        step % cfg.checkpoint_interval == 0 && step != cfg.steps) {
      checkpoint_sink(step, params);
    }
  }

  if (checkpoint_sink) {
    checkpoint_sink(cfg.steps, params);
  }
  result.params = std::move(params);
  return result;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("write_train_log_csv: cannot open " + path.string());
  }
  os << "step,loss,wall_ms\n";
  char buf[96];
  for (const TrainLogRow& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.3f\n", row.step, row.loss, row.wall_ms);
    os << buf;
  }
}

} // namespace p2pb
