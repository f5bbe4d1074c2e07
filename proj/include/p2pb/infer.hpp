#pragma once

#include "p2pb/bridge.hpp"
#include "p2pb/denoiser.hpp"
#include "p2pb/rng.hpp"
#include "p2pb/types.hpp"

#include <cstdint>
#include <vector>

namespace p2pb {

struct PatchConfig {
  double radius = 0.5;
  int max_points = 1024;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A radius-sphere neighborhood of the parent cloud. `coords` is centered by
/// the patch centroid; `source` keeps the original rows so restoring adds the
/// displacement back onto the parent coordinates exactly.
struct Patch {
  std::vector<int> indices; // into the parent cloud, ascending
  MatX3 coords;             // source rows minus centroid, over scale
  MatX3 source;             // original parent rows
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;

  /// Parent-space coordinates for a network-space result: source + scale *
  /// (net_out - coords). An unchanged patch restores bit-exactly.
  MatX3 restore(const Eigen::Ref<const MatX3>& net_out) const;
};

/// Covers the cloud with radius-sphere patches around farthest-point-sampled
/// centers; patches larger than max_points are FPS-subsampled (keeping the
/// center). Every point lands in at least one patch. Deterministic given the
/// config seed.
std::vector<Patch> extract_patches(const PointCloud& cloud, const PatchConfig& cfg);

/// Few-step reverse bridge sampling on one patch: at each grid interval the
/// network predicts x0_hat = x - sigma_t * eps(x, t) and ddpm_step moves to
/// the next time. Returns parent-space (restored) coordinates.
MatX3 denoise_patch(const DenoiserParams& params, const DenoiserConfig& cfg,
                    const BridgeSchedule& s, const Patch& patch, int steps,
                    bool stochastic, const Eigen::Ref<const MatXX>& features,
                    Rng& rng);

/// Per-point arithmetic mean of all patch predictions covering each parent
/// index, accumulated in ascending (patch, within-patch) order; features are
/// copied from the parent. Errors if any parent index is uncovered.
PointCloud merge_patches(const PointCloud& parent, const std::vector<Patch>& patches,
                         const std::vector<MatX3>& outputs);

/// extract -> denoise each patch (independent rng stream per patch index,
/// optionally across threads) -> merge. Deterministic given seed regardless
/// of worker count.
PointCloud denoise_cloud(const DenoiserParams& params, const DenoiserConfig& cfg,
                         const BridgeSchedule& s, const PointCloud& cloud,
                         const PatchConfig& patch_cfg, int steps, bool stochastic,
                         std::uint64_t seed, int num_threads = 1);

} // namespace p2pb
