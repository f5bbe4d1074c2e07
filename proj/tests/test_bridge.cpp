#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "p2pb/bridge.hpp"
#include "p2pb/rng.hpp"

#include "test_helpers.hpp"

#include <cmath>

using namespace p2pb;
using p2pb::testing::same_bits;

namespace {

BridgeSchedule default_schedule() {
  BridgeSchedule s;
  s.beta_min = 0.1;
  s.beta_max = 0.3;
  return s;
}

// Composite Simpson quadrature of g^2; independent of the closed form.
double sigma2_quadrature(const BridgeSchedule& s, double t, int intervals = 2000) {
  double acc = s.g2(0.0) + s.g2(t);
  for (int i = 1; i < intervals; ++i) {
    const double tau = t * i / intervals;
    acc += (i % 2 == 1 ? 4.0 : 2.0) * s.g2(tau);
  }
  return acc * t / (3.0 * intervals);
}

MatX3 single_point(double x, double y, double z) {
  MatX3 m(1, 3);
  m << x, y, z;
  return m;
}

} // namespace

TEST_CASE("sigma2 matches quadrature") {
  const BridgeSchedule s = default_schedule();
  CHECK(s.sigma2(0.0) == 0.0);
  CHECK(s.sigma2(0.5) == doctest::Approx(0.075).epsilon(1e-13));
  CHECK(s.sigma2(1.0) == doctest::Approx(0.2).epsilon(1e-13));
  for (double t : {0.1, 0.25, 0.5, 0.77, 1.0}) {
    CHECK(s.sigma2(t) == doctest::Approx(sigma2_quadrature(s, t)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(s.sigma2(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(s.sigma2(1.1), std::invalid_argument);
}

TEST_CASE("sigma2 and sigma_bar2 sum to the total") {
  const BridgeSchedule s = default_schedule();
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    const double sum = s.sigma2(t) + s.sigma_bar2(t);
    CHECK(std::abs(sum - s.sigma2_total()) <= 1e-12 * s.sigma2_total());
  }
}

TEST_CASE("posterior boundaries are exact") {
  const BridgeSchedule s = default_schedule();
  Rng rng(1);
  MatX3 x0(5, 3), xT(5, 3);
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 3; ++c) {
      x0(i, c) = rng.uniform(-1, 1);
      xT(i, c) = rng.uniform(-1, 1);
    }
  }
  const PosteriorMoments at0 = posterior(s, x0, xT, 0.0);
  CHECK(same_bits(at0.mu, x0));
  CHECK(at0.var == 0.0);
  const PosteriorMoments at1 = posterior(s, x0, xT, 1.0);
  CHECK(same_bits(at1.mu, xT));
  CHECK(at1.var == 0.0);
}

TEST_CASE("posterior hand value at t = 0.5") {
  const BridgeSchedule s = default_schedule();
  const PosteriorMoments m =
      posterior(s, single_point(0, 0, 0), single_point(1, 0, 0), 0.5);
  CHECK(m.mu(0, 0) == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(m.var == doctest::Approx(0.046875).epsilon(1e-14));
}

TEST_CASE("posterior weights form a convex combination") {
  const BridgeSchedule s = default_schedule();
  for (int i = 1; i < 20; ++i) {
    const double t = i / 20.0;
    const double s2 = s.sigma2(t);
    const double sb2 = s.sigma_bar2(t);
    const double w = s2 / (s2 + sb2);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    const PosteriorMoments m =
        posterior(s, single_point(0, 0, 0), single_point(1, 0, 0), t);
    CHECK(m.mu(0, 0) == doctest::Approx(w).epsilon(1e-13));
  }
}

TEST_CASE("scaling the schedule leaves mu unchanged and scales var linearly") {
  const BridgeSchedule s = default_schedule();
  Rng rng(3);
  MatX3 x0(4, 3), xT(4, 3);
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 3; ++c) {
      x0(i, c) = rng.uniform(-1, 1);
      xT(i, c) = rng.uniform(-1, 1);
    }
  }
  for (const double c : {0.5, 2.0, 7.0}) {
    BridgeSchedule scaled = s;
    scaled.beta_min *= c;
    scaled.beta_max *= c;
    for (const double t : {0.2, 0.5, 0.9}) {
      const PosteriorMoments base = posterior(s, x0, xT, t);
      const PosteriorMoments sc = posterior(scaled, x0, xT, t);
      for (int i = 0; i < 4; ++i) {
        for (int d = 0; d < 3; ++d) {
          CHECK(std::abs(sc.mu(i, d) - base.mu(i, d)) <=
                1e-12 * std::max(1.0, std::abs(base.mu(i, d))));
        }
      }
      CHECK(std::abs(sc.var - c * base.var) <= 1e-12 * c * base.var);
    }
  }
}

TEST_CASE("sample_xt is exact when the variance vanishes") {
  const BridgeSchedule s = default_schedule();
  const MatX3 x0 = single_point(0.3, -0.7, 0.1);
  const MatX3 xT = single_point(1.0, 2.0, 3.0);
  Rng rng(5);
  CHECK(same_bits(sample_xt(s, x0, xT, 0.0, rng), x0));
  CHECK(same_bits(sample_xt(s, x0, xT, 1.0, rng), xT));
}

TEST_CASE("sample_xt moments match the posterior (Monte Carlo)") {
  const BridgeSchedule s = default_schedule();
  const MatX3 x0 = single_point(0, 0, 0);
  const MatX3 xT = single_point(1, 0, 0);
  const PosteriorMoments m = posterior(s, x0, xT, 0.5);

  const int draws = 100000;
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = sample_xt(s, x0, xT, 0.5, rng)(0, 0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / draws;
  const double var = sum_sq / draws - mean * mean;
  const double se = std::sqrt(m.var / draws);
  CHECK(std::abs(mean - m.mu(0, 0)) < 3.0 * se);
  CHECK(std::abs(var - m.var) < 0.05 * m.var);
}

TEST_CASE("timestep grid is uniform and strictly decreasing") {
  BridgeSchedule s = default_schedule();
  s.steps = 1;
  CHECK(timestep_grid(s) == std::vector<double>{1.0, 0.0});
  s.steps = 4;
  CHECK(timestep_grid(s) == std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0});
  for (int steps : {1, 2, 3, 10, 50}) {
    s.steps = steps;
    const std::vector<double> grid = timestep_grid(s);
    CHECK(static_cast<int>(grid.size()) == steps + 1);
    CHECK(grid.front() == 1.0);
    CHECK(grid.back() == 0.0);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) CHECK(grid[i] > grid[i + 1]);
  }
}

TEST_CASE("ddpm_step boundary and hand values") {
  const BridgeSchedule s = default_schedule();
  const MatX3 x0_hat = single_point(0.11, -0.5, 2.0);
  const MatX3 x_t = single_point(1.0, 1.0, 1.0);
  Rng rng(7);
  CHECK(same_bits(ddpm_step(s, x_t, x0_hat, 0.5, 0.0, false, rng), x0_hat));
  CHECK(same_bits(ddpm_step(s, x_t, x0_hat, 0.5, 0.0, true, rng), x0_hat));

  const MatX3 mid =
      ddpm_step(s, single_point(1, 0, 0), single_point(0, 0, 0), 1.0, 0.5, false, rng);
  CHECK(mid(0, 0) == doctest::Approx(0.375).epsilon(1e-14));

  CHECK_THROWS_AS(ddpm_step(s, x_t, x0_hat, 0.5, 0.5, false, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(ddpm_step(s, x_t, x0_hat, 0.2, 0.5, false, rng),
                  std::invalid_argument);
}

TEST_CASE("stochastic ddpm_step with zero variance equals the mean") {
  const BridgeSchedule s = default_schedule();
  // t_lo = 0 makes the sub-bridge variance vanish
  const MatX3 x0_hat = single_point(0.25, 0, 0);
  const MatX3 x_t = single_point(0.9, 0, 0);
  Rng r1(11), r2(11);
  const MatX3 det = ddpm_step(s, x_t, x0_hat, 0.7, 0.0, false, r1);
  const MatX3 sto = ddpm_step(s, x_t, x0_hat, 0.7, 0.0, true, r2);
  CHECK(same_bits(det, sto));
}

TEST_CASE("ot_ode_drift hand values and structure") {
  const BridgeSchedule s = default_schedule();
  Rng rng(19);
  CHECK(ot_ode_drift(s, single_point(0.4, 0.4, 0.4), single_point(0.4, 0.4, 0.4), 0.5)
            .isZero(0.0));

  const MatX3 drift =
      ot_ode_drift(s, single_point(0.375, 0, 0), single_point(0, 0, 0), 0.5);
  CHECK(drift(0, 0) == doctest::Approx(1.0).epsilon(1e-13));

  for (int rep = 0; rep < 10; ++rep) {
    const MatX3 x0 = single_point(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const MatX3 xt = single_point(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double t = rng.uniform(0.1, 1.0);
    const MatX3 d = ot_ode_drift(s, xt, x0, t);
    const Vec3 dir = (xt - x0).row(0);
    const Vec3 got = d.row(0);
    CHECK(got.cross(dir).norm() <= 1e-12 * got.norm() * dir.norm());
  }

  CHECK_THROWS_AS(ot_ode_drift(s, single_point(1, 0, 0), single_point(0, 0, 0), 0.0),
                  std::invalid_argument);
}

TEST_CASE("posterior mean path satisfies the transport ODE") {
  const BridgeSchedule s = default_schedule();
  const MatX3 x0 = single_point(-0.2, 0.5, 1.0);
  const MatX3 xT = single_point(0.8, -0.3, 0.25);
  const double h = 1e-5;
  for (int i = 1; i < 1000; ++i) {
    const double t = 0.01 + (0.99 - 2 * h) * i / 1000.0;
    const MatX3 mu_lo = posterior(s, x0, xT, t - h).mu;
    const MatX3 mu_hi = posterior(s, x0, xT, t + h).mu;
    const MatX3 fd = (mu_hi - mu_lo) / (2.0 * h);
    const MatX3 drift = ot_ode_drift(s, posterior(s, x0, xT, t).mu, x0, t);
    const double rel = (fd - drift).norm() / drift.norm();
    CHECK(rel < 1e-6);
  }
}

TEST_CASE("chaining deterministic steps with the true x0 lands on x0 exactly") {
  const BridgeSchedule s = default_schedule();
  Rng rng(21);
  MatX3 x0(6, 3), xT(6, 3);
  for (int i = 0; i < 6; ++i) {
    for (int c = 0; c < 3; ++c) {
      x0(i, c) = rng.uniform(-1, 1);
      xT(i, c) = rng.uniform(-1, 1);
    }
  }
  for (int steps : {1, 3, 10}) {
    BridgeSchedule grid_s = s;
    grid_s.steps = steps;
    const std::vector<double> grid = timestep_grid(grid_s);
    MatX3 x = xT;
    for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
      x = ddpm_step(s, x, x0, grid[g], grid[g + 1], false, rng);
    }
    CHECK(same_bits(x, x0));
  }
}

TEST_CASE("schedule validation") {
  BridgeSchedule s = default_schedule();
  s.beta_min = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = default_schedule();
  s.beta_max = 0.05;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = default_schedule();
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = default_schedule();
  s.t_min = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
