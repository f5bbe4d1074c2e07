#include "p2pb/bridge.hpp"

#include <cmath>

namespace p2pb {

namespace {

void check_same_shape(const Eigen::Ref<const MatX3>& a,
                      const Eigen::Ref<const MatX3>& b, const char* what) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument(std::string(what) + ": point count mismatch");
  }
}

MatX3 gaussian_like(Eigen::Index n, Rng& rng) {
  MatX3 z(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      z(i, c) = rng.normal();
    }
  }
  return z;
}

} // namespace

double BridgeSchedule::sigma2(double t) const {
  if (t < 0.0 || t > 1.0) {
    throw std::invalid_argument("BridgeSchedule::sigma2: t must be in [0, 1]");
  }
  return beta_min * t + (beta_max - beta_min) * t * t * 0.5;
}

void BridgeSchedule::validate() const {
  if (!(beta_min > 0.0)) {
    throw std::invalid_argument("BridgeSchedule: beta_min must be > 0");
  }
  if (!(beta_max >= beta_min)) {
    throw std::invalid_argument("BridgeSchedule: beta_max must be >= beta_min");
  }
  if (steps < 1) {
    throw std::invalid_argument("BridgeSchedule: steps must be >= 1");
  }
  if (!(t_min > 0.0 && t_min < 1.0)) {
    throw std::invalid_argument("BridgeSchedule: t_min must be in (0, 1)");
  }
}

PosteriorMoments posterior(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x0,
                           const Eigen::Ref<const MatX3>& xT, double t) {
  check_same_shape(x0, xT, "posterior");
  const double s2 = s.sigma2(t);
  const double sb2 = s.sigma2_total() - s2;

  PosteriorMoments out;
  // Branch on the boundaries so they are exact, not merely close.
  if (s2 == 0.0) {
    out.mu = x0;
    out.var = 0.0;
    return out;
  }
  if (sb2 == 0.0) {
    out.mu = xT;
    out.var = 0.0;
    return out;
  }
  const double w = s2 / (s2 + sb2);
  out.mu = x0 + w * (xT - x0);
  out.var = s2 * sb2 / (s2 + sb2);
  return out;
}

MatX3 sample_xt(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x0,
                const Eigen::Ref<const MatX3>& xT, double t, Rng& rng) {
  const PosteriorMoments m = posterior(s, x0, xT, t);
  if (m.var == 0.0) {
    return m.mu;
  }
  return m.mu + std::sqrt(m.var) * gaussian_like(m.mu.rows(), rng);
}

std::vector<double> timestep_grid(const BridgeSchedule& s) {
  if (s.steps < 1) {
    throw std::invalid_argument("timestep_grid: steps must be >= 1");
  }
  std::vector<double> grid(static_cast<std::size_t>(s.steps) + 1);
  for (int i = 0; i <= s.steps; ++i) {
    grid[static_cast<std::size_t>(i)] =
        static_cast<double>(s.steps - i) / static_cast<double>(s.steps);
  }
  return grid;
}

MatX3 ddpm_step(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x_t,
                const Eigen::Ref<const MatX3>& x0_hat, double t_hi, double t_lo,
                bool stochastic, Rng& rng) {
  check_same_shape(x_t, x0_hat, "ddpm_step");
  if (!(t_lo >= 0.0 && t_lo < t_hi && t_hi <= 1.0)) {
    throw std::invalid_argument("ddpm_step: need 0 <= t_lo < t_hi <= 1");
  }
  const double s2_lo = s.sigma2(t_lo);
  const double sb2_sub = s.sigma2(t_hi) - s2_lo;
  if (s2_lo == 0.0) {
    return x0_hat;
  }
  const double w = s2_lo / (s2_lo + sb2_sub);
  MatX3 mu = x0_hat + w * (x_t - x0_hat);
  if (!stochastic) {
    return mu;
  }
  // Coinciding endpoints denoise to themselves in both modes; no noise is
  // drawn for them, which keeps an identity predictor exactly the identity.
  if ((x_t.array() == x0_hat.array()).all()) {
    return mu;
  }
  const double var = s2_lo * sb2_sub / (s2_lo + sb2_sub);
  if (var == 0.0) {
    return mu;
  }
  return mu + std::sqrt(var) * gaussian_like(mu.rows(), rng);
}

MatX3 ot_ode_drift(const BridgeSchedule& s, const Eigen::Ref<const MatX3>& x_t,
                   const Eigen::Ref<const MatX3>& x0, double t) {
  check_same_shape(x_t, x0, "ot_ode_drift");
  const double s2 = s.sigma2(t);
  if (s2 <= 0.0) {
    throw std::invalid_argument("ot_ode_drift: sigma2(t) must be positive");
  }
  return (s.g2(t) / s2) * (x_t - x0);
}

} // namespace p2pb
