#pragma once

#include "p2pb/assignment.hpp"
#include "p2pb/bridge.hpp"
#include "p2pb/denoiser.hpp"
#include "p2pb/rng.hpp"
#include "p2pb/types.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace p2pb {

/// An aligned (noisy, clean) pair: clean_aligned is the clean cloud reordered
/// by the cached assignment so index i corresponds across the two clouds.
struct PairedSample {
  PointCloud noisy;
  PointCloud clean_aligned;
  Assignment assignment;
  std::string source_id;
};

struct TrainConfig {
  BridgeSchedule schedule;
  DenoiserConfig denoiser;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_patches = 8;
  int patch_points = 1024;
  int steps = 0;
  std::uint64_t seed = 0;
  double patch_radius = 0.5;
  int checkpoint_interval = 0; // 0 = final checkpoint only
  bool shuffle_clean = false;  // ablation: randomly permute clean rows first

  void validate() const;
};

/// Strict JSON (unknown keys rejected at every level) <-> TrainConfig.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// Checkpoint header carrying everything needed to rebuild the network and
/// schedule at inference time.
nlohmann::json checkpoint_header(const TrainConfig& cfg, int trained_steps,
                                 double final_loss);
DenoiserConfig denoiser_config_from_header(const nlohmann::json& header);
BridgeSchedule schedule_from_header(const nlohmann::json& header);

struct TrainingExample {
  MatX3 x_t;
  double t = 0.0;
  MatX3 target; // (x_t - x_0) / sigma_t
};

/// Builds one bridge training example with explicit (t, noise); the clean
/// cloud is x_0 and the noisy cloud is x_T.
TrainingExample make_training_example_at(const Eigen::Ref<const MatX3>& clean,
                                         const Eigen::Ref<const MatX3>& noisy,
                                         const BridgeSchedule& s, double t,
                                         const Eigen::Ref<const MatX3>& noise);

/// Draws t ~ U[t_min, 1) and standard-normal noise from rng.
TrainingExample make_training_example(const PairedSample& pair,
                                      const BridgeSchedule& s, Rng& rng);

struct AdamState {
  VecX m;
  VecX v;
};

/// Standard Adam update with bias correction; step_index starts at 1.
void adam_step(VecX& params, const VecX& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps, int step_index);

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<TrainLogRow> log;
};

/// Full optimization loop: per step, crops batch_patches radius-sphere
/// patches around FPS-seeded centers (the same noisy-point index set crops
/// both clouds, each patch centered by its noisy centroid), builds bridge
/// examples, accumulates entry-weighted gradients and applies one Adam step.
/// Deterministic given cfg.seed. `checkpoint_sink`, when set, is called at
/// every checkpoint_interval and once at the end.
TrainResult train(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                  const std::function<void(int, const DenoiserParams&)>&
                      checkpoint_sink = nullptr);

/// "step,loss,wall_ms" CSV rows.
void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::filesystem::path& path);

} // namespace p2pb
