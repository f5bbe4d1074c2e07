#include "p2pb/infer.hpp"

#include "p2pb/cloud_ops.hpp"
#include "p2pb/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace p2pb {

void PatchConfig::validate() const {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("PatchConfig: radius must be positive");
  }
  if (max_points < 1) {
    throw std::invalid_argument("PatchConfig: max_points must be >= 1");
  }
}

MatX3 Patch::restore(const Eigen::Ref<const MatX3>& net_out) const {
  if (net_out.rows() != coords.rows()) {
    throw std::invalid_argument("Patch::restore: row count mismatch");
  }
  return source + scale * (net_out - coords);
}

namespace {

Patch build_patch(const PointCloud& cloud, const KdTree& tree, int center,
                  const PatchConfig& cfg) {
  std::vector<int> indices =
      tree.radius(cloud.coords.row(center).transpose(), cfg.radius);
  if (static_cast<int>(indices.size()) > cfg.max_points) {
    MatX3 sub(static_cast<Eigen::Index>(indices.size()), 3);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      sub.row(static_cast<Eigen::Index>(i)) = cloud.coords.row(indices[i]);
    }
    // FPS keeps the center point, so a patch always covers its own center.
    const int center_pos = static_cast<int>(
        std::lower_bound(indices.begin(), indices.end(), center) - indices.begin());
    const std::vector<int> keep =
        farthest_point_sampling(sub, cfg.max_points, center_pos);
    std::vector<int> subset;
    subset.reserve(keep.size());
    for (const int pos : keep) subset.push_back(indices[static_cast<std::size_t>(pos)]);
    std::sort(subset.begin(), subset.end());
    indices = std::move(subset);
  }

  Patch patch;
  patch.indices = std::move(indices);
  const Eigen::Index m = static_cast<Eigen::Index>(patch.indices.size());
  patch.source.resize(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    patch.source.row(i) = cloud.coords.row(patch.indices[static_cast<std::size_t>(i)]);
  }
  patch.centroid = patch.source.colwise().mean();
  patch.scale = 1.0;
  patch.coords = patch.source.rowwise() - patch.centroid.transpose();
  return patch;
}

} // namespace

std::vector<Patch> extract_patches(const PointCloud& cloud, const PatchConfig& cfg) {
  cfg.validate();
  cloud.validate();
  const int n = static_cast<int>(cloud.size());
  const KdTree tree(cloud.coords);

  std::vector<Patch> patches;
  std::vector<char> covered(static_cast<std::size_t>(n), 0);
  int num_covered = 0;

  auto emit = [&](int center) {
    Patch patch = build_patch(cloud, tree, center, cfg);
    for (const int idx : patch.indices) {
      if (!covered[static_cast<std::size_t>(idx)]) {
        covered[static_cast<std::size_t>(idx)] = 1;
        ++num_covered;
      }
    }
    patches.push_back(std::move(patch));
  };

  // Incremental farthest-point walk over candidate centers, skipping centers
  // that earlier patches already cover, until everything is covered.
  Rng rng(cfg.seed);
  int candidate = rng.uniform_int(n);
  VecX min_d2 =
      (cloud.coords.rowwise() - cloud.coords.row(candidate)).rowwise().squaredNorm();
  while (num_covered < n) {
    if (!covered[static_cast<std::size_t>(candidate)]) {
      emit(candidate);
    }
    if (num_covered == n) break;

    int next = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = i;
      }
    }
    if (best <= 0.0) {
      // Only co-located leftovers remain (subsampling can drop duplicates);
      // cover them directly.
      for (int i = 0; i < n; ++i) {
        if (!covered[static_cast<std::size_t>(i)]) emit(i);
      }
      break;
    }
    candidate = next;
    min_d2 = min_d2.cwiseMin(
        (cloud.coords.rowwise() - cloud.coords.row(candidate)).rowwise().squaredNorm());
  }
  return patches;
}

MatX3 denoise_patch(const DenoiserParams& params, const DenoiserConfig& cfg,
                    const BridgeSchedule& s, const Patch& patch, int steps,
                    bool stochastic, const Eigen::Ref<const MatXX>& features,
                    Rng& rng) {
  if (steps < 1) {
    throw std::invalid_argument("denoise_patch: steps must be >= 1");
  }
  BridgeSchedule grid_schedule = s;
  grid_schedule.steps = steps;
  const std::vector<double> grid = timestep_grid(grid_schedule);

  MatX3 x = patch.coords; // the noisy patch is x_T
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    const double t_hi = grid[g];
    const double t_lo = grid[g + 1];
    const PointCloud state(x, features);
    const MatX3 eps = denoiser_forward(params, cfg, state, t_hi);
    const MatX3 x0_hat = x - std::sqrt(s.sigma2(t_hi)) * eps;
    x = ddpm_step(s, x, x0_hat, t_hi, t_lo, stochastic, rng);
  }
  return patch.restore(x);
}

PointCloud merge_patches(const PointCloud& parent, const std::vector<Patch>& patches,
                         const std::vector<MatX3>& outputs) {
  if (patches.size() != outputs.size()) {
    throw std::invalid_argument("merge_patches: patches/outputs length mismatch");
  }
  const Eigen::Index n = parent.size();
  MatX3 sum = MatX3::Zero(n, 3);
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  std::vector<char> all_equal(static_cast<std::size_t>(n), 1);
  MatX3 first(n, 3);

  for (std::size_t p = 0; p < patches.size(); ++p) {
    const Patch& patch = patches[p];
    if (outputs[p].rows() != static_cast<Eigen::Index>(patch.indices.size())) {
      throw std::invalid_argument("merge_patches: output rows do not match patch");
    }
    for (std::size_t i = 0; i < patch.indices.size(); ++i) {
      const Eigen::Index idx = patch.indices[i];
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      if (count[static_cast<std::size_t>(idx)] == 0) {
        first.row(idx) = outputs[p].row(row);
      } else if ((first.row(idx).array() != outputs[p].row(row).array()).any()) {
        all_equal[static_cast<std::size_t>(idx)] = 0;
      }
      sum.row(idx) += outputs[p].row(row);
      ++count[static_cast<std::size_t>(idx)];
    }
  }

  PointCloud out;
  out.coords.resize(n, 3);
  out.features = parent.features;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = count[static_cast<std::size_t>(i)];
    if (c == 0) {
      throw std::runtime_error("merge_patches: point " + std::to_string(i) +
                               " is covered by no patch");
    }
    // The mean of identical predictions is that prediction, computed without
    // division so it stays bit-exact.
    if (all_equal[static_cast<std::size_t>(i)]) {
      out.coords.row(i) = first.row(i);
    } else {
      out.coords.row(i) = sum.row(i) / static_cast<double>(c);
    }
  }
  return out;
}

PointCloud denoise_cloud(const DenoiserParams& params, const DenoiserConfig& cfg,
                         const BridgeSchedule& s, const PointCloud& cloud,
                         const PatchConfig& patch_cfg, int steps, bool stochastic,
                         std::uint64_t seed, int num_threads) {
  if (cloud.feature_width() != cfg.feature_width) {
    throw std::runtime_error("denoise_cloud: feature width mismatch (model expects " +
                             std::to_string(cfg.feature_width) + ", input has " +
                             std::to_string(cloud.feature_width()) + ")");
  }
  const std::vector<Patch> patches = extract_patches(cloud, patch_cfg);
  std::vector<MatX3> outputs(patches.size());

  const Rng base(seed);
  auto run_patch = [&](std::size_t p) {
    Rng rng = base.derive(p);
    MatXX features(static_cast<Eigen::Index>(patches[p].indices.size()),
                   cloud.feature_width());
    for (std::size_t i = 0; i < patches[p].indices.size(); ++i) {
      if (cloud.has_features()) {
        features.row(static_cast<Eigen::Index>(i)) =
            cloud.features.row(patches[p].indices[i]);
      }
    }
    outputs[p] = denoise_patch(params, cfg, s, patches[p], steps, stochastic,
                               features, rng);
  };

  int workers = num_threads;
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
  }
  workers = std::min<int>(workers, static_cast<int>(patches.size()));

  if (workers <= 1) {
    for (std::size_t p = 0; p < patches.size(); ++p) run_patch(p);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t p = static_cast<std::size_t>(w); p < patches.size();
             p += static_cast<std::size_t>(workers)) {
          run_patch(p);
        }
      });
    }
    for (std::thread& th : pool) th.join();
  }

  return merge_patches(cloud, patches, outputs);
}

} // namespace p2pb
