#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "p2pb/cloud_ops.hpp"
#include "p2pb/kdtree.hpp"
#include "p2pb/rng.hpp"

#include "test_helpers.hpp"

#include <algorithm>
#include <limits>
#include <vector>

using namespace p2pb;
using p2pb::testing::same_bits;

namespace {

MatX3 random_coords(Rng& rng, int n, double scale = 1.0) {
  MatX3 m(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = rng.uniform(-scale, scale);
  }
  return m;
}

// Exhaustive scan with the same tie rule the tree promises: lowest index.
std::pair<int, double> brute_nearest(const MatX3& pts, const Vec3& q) {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double d2 = (pts.row(i).transpose() - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<int> brute_radius(const MatX3& pts, const Vec3& q, double r) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if ((pts.row(i).transpose() - q).squaredNorm() <= r * r) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

} // namespace

TEST_CASE("single-point index answers with point 0") {
  MatX3 pts(1, 3);
  pts << 0.5, -1.0, 2.0;
  const KdTree tree(pts);
  const auto [idx, dist] = tree.nearest(Vec3(10, 10, 10));
  CHECK(idx == 0);
  CHECK(dist == doctest::Approx((Vec3(10, 10, 10) - Vec3(0.5, -1.0, 2.0)).norm()));
}

TEST_CASE("nearest matches exhaustive search on random clouds") {
  Rng rng(42);
  const MatX3 pts = random_coords(rng, 1000);
  const KdTree tree(pts);
  for (int q = 0; q < 50; ++q) {
    const Vec3 query(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                     rng.uniform(-1.5, 1.5));
    const auto [ti, td] = tree.nearest(query);
    const auto [bi, bd] = brute_nearest(pts, query);
    CHECK(ti == bi);
    CHECK(td == bd); // same arithmetic, bit-identical
  }
}

TEST_CASE("duplicate points are allowed and give distance zero") {
  MatX3 pts(3, 3);
  pts << 1, 2, 3, 1, 2, 3, 4, 5, 6;
  const KdTree tree(pts);
  const auto [idx, dist] = tree.nearest(Vec3(1, 2, 3));
  CHECK(idx == 0);
  CHECK(dist == 0.0);
}

TEST_CASE("nearest hand case") {
  MatX3 pts(2, 3);
  pts << 0, 0, 0, 1, 0, 0;
  const KdTree tree(pts);
  const auto [idx, dist] = tree.nearest(Vec3(0.2, 0, 0));
  CHECK(idx == 0);
  CHECK(dist == doctest::Approx(0.2));
}

TEST_CASE("equidistant ties break to the lowest index") {
  // points at indices 3 and 7 are equidistant from the query
  MatX3 pts(8, 3);
  pts.setZero();
  for (int i = 0; i < 8; ++i) pts(i, 0) = 100.0 + i;
  pts.row(3) << 1.0, 0, 0;
  pts.row(7) << -1.0, 0, 0;
  const KdTree tree(pts);
  const auto [idx, dist] = tree.nearest(Vec3(0, 0, 0));
  CHECK(idx == 3);
  CHECK(dist == 1.0);
}

TEST_CASE("radius query hand cases") {
  MatX3 pts(2, 3);
  pts << 0, 0, 0, 2, 0, 0;
  const KdTree tree(pts);
  CHECK(tree.radius(Vec3(0, 0, 0), 1.0) == std::vector<int>{0});
  CHECK(tree.radius(Vec3(0, 0, 0), 10.0) == std::vector<int>{0, 1});
  CHECK(tree.radius(Vec3(5, 5, 5), 0.5).empty());
  CHECK_THROWS_AS(tree.radius(Vec3(0, 0, 0), 0.0), std::invalid_argument);
}

TEST_CASE("radius boundary is inclusive") {
  MatX3 pts(2, 3);
  pts << 0, 0, 0, 1, 0, 0;
  const KdTree tree(pts);
  CHECK(tree.radius(Vec3(0, 0, 0), 1.0) == std::vector<int>{0, 1});
}

TEST_CASE("nearest and radius agree with exhaustive search on 100 queries") {
  Rng rng(7);
  const MatX3 pts = random_coords(rng, 512);
  const KdTree tree(pts, 8);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto [ti, td] = tree.nearest(query);
    const auto [bi, bd] = brute_nearest(pts, query);
    CHECK(ti == bi);
    CHECK(td == bd);
    const double r = rng.uniform(0.05, 1.0);
    CHECK(tree.radius(query, r) == brute_radius(pts, query, r));
  }
}

TEST_CASE("knn matches a sorted exhaustive ranking") {
  Rng rng(13);
  const MatX3 pts = random_coords(rng, 200);
  const KdTree tree(pts, 4);
  std::vector<int> idx;
  std::vector<double> dist;
  for (int q = 0; q < 20; ++q) {
    const Vec3 query(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    tree.knn(query, 9, idx, dist);
    REQUIRE(idx.size() == 9);

    std::vector<std::pair<double, int>> all;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      all.emplace_back((pts.row(i).transpose() - query).squaredNorm(),
                       static_cast<int>(i));
    }
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 9; ++i) {
      CHECK(idx[static_cast<std::size_t>(i)] == all[static_cast<std::size_t>(i)].second);
    }
  }
}

TEST_CASE("empty cloud cannot be indexed") {
  PointCloud empty;
  CHECK_THROWS_AS(build_index(empty), std::invalid_argument);
}

TEST_CASE("farthest point sampling greedy trace on a line") {
  MatX3 pts(4, 3);
  pts << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  CHECK(farthest_point_sampling(pts, 2, 0) == std::vector<int>{0, 3});
  CHECK(farthest_point_sampling(pts, 1, 2) == std::vector<int>{2});
}

TEST_CASE("farthest point sampling with k equal to N is a permutation") {
  Rng rng(5);
  const MatX3 pts = random_coords(rng, 33);
  std::vector<int> sel = farthest_point_sampling(pts, 33, 4);
  std::sort(sel.begin(), sel.end());
  for (int i = 0; i < 33; ++i) CHECK(sel[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("farthest point sampling max-min distances decrease, no repeats") {
  Rng rng(11);
  const MatX3 pts = random_coords(rng, 128);
  const std::vector<int> sel = farthest_point_sampling(pts, 40, 0);

  std::vector<char> seen(128, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sel.size(); ++s) {
    CHECK(!seen[static_cast<std::size_t>(sel[s])]);
    seen[static_cast<std::size_t>(sel[s])] = 1;
    if (s == 0) continue;
    double d2 = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < s; ++r) {
      d2 = std::min(d2, (pts.row(sel[s]) - pts.row(sel[r])).squaredNorm());
    }
    CHECK(d2 < prev);
    prev = d2;
  }
}

TEST_CASE("farthest point sampling rejects bad arguments") {
  MatX3 pts(4, 3);
  pts.setZero();
  CHECK_THROWS_AS(farthest_point_sampling(pts, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(farthest_point_sampling(pts, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(farthest_point_sampling(pts, 2, 4), std::invalid_argument);
}

TEST_CASE("normalize_unit_sphere hand case") {
  PointCloud ref;
  ref.coords.resize(2, 3);
  ref.coords << 2, 0, 0, 4, 0, 0;
  ref.features.resize(2, 0);
  const NormalizeResult out = normalize_unit_sphere(ref, ref);
  CHECK(same_bits(out.center, Vec3(3, 0, 0)));
  CHECK(out.scale == 1.0);
  CHECK(out.reference.coords(0, 0) == -1.0);
  CHECK(out.reference.coords(1, 0) == 1.0);
}

TEST_CASE("normalize_unit_sphere is the identity for normalized input") {
  PointCloud ref;
  ref.coords.resize(2, 3);
  ref.coords << 1, 0, 0, -1, 0, 0;
  ref.features.resize(2, 0);
  const NormalizeResult out = normalize_unit_sphere(ref, ref);
  CHECK(out.center.isZero(0));
  CHECK(out.scale == 1.0);
  CHECK(same_bits(out.reference.coords, ref.coords));
}

TEST_CASE("normalize_unit_sphere applies the reference transform to pred") {
  Rng rng(3);
  PointCloud pred(random_coords(rng, 50, 5.0));
  PointCloud ref(random_coords(rng, 70, 5.0));
  const NormalizeResult out = normalize_unit_sphere(pred, ref);

  const Vec3 center = ref.coords.colwise().mean();
  const double scale =
      (ref.coords.rowwise() - center.transpose()).rowwise().norm().maxCoeff();
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const Vec3 expected = (pred.coords.row(i).transpose() - center) / scale;
    CHECK((out.pred.coords.row(i).transpose() - expected).norm() == 0.0);
  }
  // the reference ends up inside the closed unit ball, touching it
  const VecX norms = out.reference.coords.rowwise().norm();
  CHECK(norms.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norms.maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("normalize_unit_sphere inverse reproduces inputs to 1e-9") {
  Rng rng(9);
  PointCloud pred(random_coords(rng, 40, 3.0));
  PointCloud ref(random_coords(rng, 40, 3.0));
  const NormalizeResult out = normalize_unit_sphere(pred, ref);
  const MatX3 restored =
      (out.pred.coords * out.scale).rowwise() + out.center.transpose();
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double rel = (restored.row(i) - pred.coords.row(i)).norm() /
                       std::max(1.0, pred.coords.row(i).norm());
    CHECK(rel < 1e-9);
  }
}

TEST_CASE("normalize_unit_sphere rejects degenerate references") {
  PointCloud ref;
  ref.coords.resize(3, 3);
  ref.coords.setConstant(2.0);
  ref.features.resize(3, 0);
  CHECK_THROWS_AS(normalize_unit_sphere(ref, ref), std::invalid_argument);
  PointCloud empty;
  CHECK_THROWS_AS(normalize_unit_sphere(ref, empty), std::invalid_argument);
}
