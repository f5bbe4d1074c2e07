#pragma once

#include "p2pb/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace p2pb {

/// Architecture of the noise predictor: a small edge-convolution point
/// network. Each block gathers [h_i, h_j - h_i, x_j - x_i] over the k nearest
/// neighbors, applies a linear layer + ReLU, max-pools over neighbors, and
/// adds a projected sinusoidal time embedding. A global max-pooled feature is
/// concatenated before the linear output head.
struct DenoiserConfig {
  int hidden_width = 64; // W
  int knn_k = 16;
  int num_blocks = 2;
  int time_dim = 64; // must be even
  int feature_width = 0;

  void validate() const;
};

/// Canonical flat layout of all trainable tensors. The entry order defines
/// the checkpoint payload order:
///   per block: edge_w (W x (2C+3)), edge_b (W), time_w (W x time_dim),
///              time_b (W);
///   then:      pool_w (W x W), pool_b (W), head_w (3 x 2W), head_b (3)
/// where C is 3 + feature_width for block 0 and W afterwards.
struct ParamLayout {
  struct Entry {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };
  std::vector<Entry> entries;
  Eigen::Index total = 0;

  static ParamLayout make(const DenoiserConfig& cfg);
  const Entry& find(const std::string& name) const;
};

struct DenoiserParams {
  VecX values;
  ParamLayout layout;
};

/// Sinusoidal embedding: half sines, half cosines over geometric frequencies
/// omega_j = 10000^(-2(j-1)/dim), with t scaled by 1000 so [0, 1] spans the
/// usual positional-embedding range.
VecX time_embed(double t, int dim);

/// Glorot-uniform weights, zero biases, and a zero output head, so a fresh
/// network predicts exactly zero noise. Deterministic given the seed.
DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);

/// Evaluates eps_theta(x_t, t). Coordinates must already be centered by the
/// caller; features, when configured, ride along from the cloud.
MatX3 denoiser_forward(const DenoiserParams& params, const DenoiserConfig& cfg,
                       const PointCloud& x_t, double t);

struct LossGrad {
  double loss = 0.0;
  VecX grad;
};

/// Mean squared error against `target` over all N*3 entries, plus the exact
/// gradient with respect to every parameter (reverse mode; max-pool
/// subgradient ties go to the lowest index).
LossGrad denoiser_forward_backward(const DenoiserParams& params,
                                   const DenoiserConfig& cfg, const PointCloud& x_t,
                                   double t, const MatX3& target);

} // namespace p2pb
