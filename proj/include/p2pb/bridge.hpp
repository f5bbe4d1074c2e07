#pragma once

#include "p2pb/rng.hpp"
#include "p2pb/types.hpp"

#include <vector>

namespace p2pb {

/// Linear diffusion schedule g^2(t) = beta_min + (beta_max - beta_min) * t on
/// t in [0, 1], together with the discretization used at inference.
///
/// The integral sigma2(t) = int_0^t g^2 is closed-form, which is what makes
/// the whole bridge tractable: the posterior between the two endpoints is an
/// explicit Gaussian at every t.
struct BridgeSchedule {
  double beta_min = 0.1;
  double beta_max = 0.3;
  int steps = 10;      // T, reverse-step count
  double t_min = 1e-3; // smallest training/inference time

  double g2(double t) const { return beta_min + (beta_max - beta_min) * t; }

  /// int_0^t g^2(tau) dtau = beta_min*t + (beta_max - beta_min)*t^2/2.
  double sigma2(double t) const;

  /// sigma2(1), the total accumulated variance.
  double sigma2_total() const { return beta_min + (beta_max - beta_min) * 0.5; }

  /// int_t^1 g^2(tau) dtau.
  double sigma_bar2(double t) const { return sigma2_total() - sigma2(t); }

  void validate() const;
};

/// Moments of q(x_t | x_0, x_T): per-point mean and a single isotropic
/// variance shared across points and coordinates.
struct PosteriorMoments {
  MatX3 mu;
  double var = 0.0;
};

/// Closed-form posterior of the bridge pinned at x_0 (t=0) and x_T (t=1).
/// Exact at the boundaries: t=0 returns x0 with var 0, t=1 returns xT.
PosteriorMoments posterior(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x0,
                           const Eigen::Ref<const MatX3>& xT, double t);

/// Draws x_t = mu + sqrt(var) * z with z standard normal per coordinate.
MatX3 sample_xt(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x0,
                const Eigen::Ref<const MatX3>& xT, double t, Rng& rng);

/// Strictly decreasing uniform grid 1 = t_T > ... > t_0 = 0 with T+1 entries,
/// T taken from the schedule.
std::vector<double> timestep_grid(const BridgeSchedule& s);

/// One reverse step: the sub-bridge posterior on [0, t_hi] with endpoints
/// (x0_hat at 0, x_t at t_hi), evaluated at t_lo. Deterministic mode returns
/// the mean (the vanishing-stochasticity limit); stochastic mode adds
/// sqrt(var) * z. t_lo = 0 returns x0_hat exactly.
MatX3 ddpm_step(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x_t,
                const Eigen::Ref<const MatX3>& x0_hat, double t_hi, double t_lo,
                bool stochastic, Rng& rng);

/// Drift of the deterministic transport ODE: (g^2(t) / sigma2(t)) * (x_t - x_0).
/// Requires sigma2(t) > 0.
MatX3 ot_ode_drift(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x_t,
                   const Eigen::Ref<const MatX3>& x0, double t);

} // namespace p2pb
