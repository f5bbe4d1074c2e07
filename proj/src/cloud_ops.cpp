#include "p2pb/cloud_ops.hpp"

#include <limits>

namespace p2pb {

std::vector<int> farthest_point_sampling(const Eigen::Ref<const MatX3>& coords,
                                         int k, int start) {
  const int n = static_cast<int>(coords.rows());
  if (k < 1 || k > n) {
    throw std::invalid_argument("farthest_point_sampling: k out of range");
  }
  if (start < 0 || start >= n) {
    throw std::invalid_argument("farthest_point_sampling: start out of range");
  }

  std::vector<int> selected;
  selected.reserve(static_cast<std::size_t>(k));
  selected.push_back(start);

  // min squared distance from each point to the selected set
  VecX min_d2 = (coords.rowwise() - coords.row(start)).rowwise().squaredNorm();
  for (int round = 1; round < k; ++round) {
    int best = 0;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    selected.push_back(best);
    min_d2 = min_d2.cwiseMin(
        (coords.rowwise() - coords.row(best)).rowwise().squaredNorm());
  }
  return selected;
}

double bbox_diagonal(const Eigen::Ref<const MatX3>& coords) {
  if (coords.rows() == 0) {
    throw std::invalid_argument("bbox_diagonal: empty point set");
  }
  const Vec3 lo = coords.colwise().minCoeff();
  const Vec3 hi = coords.colwise().maxCoeff();
  return (hi - lo).norm();
}

NormalizeResult normalize_unit_sphere(const PointCloud& pred,
                                      const PointCloud& reference) {
  if (reference.size() == 0) {
    throw std::invalid_argument("normalize_unit_sphere: empty reference cloud");
  }
  NormalizeResult out;
  out.center = reference.coords.colwise().mean();
  out.scale =
      (reference.coords.rowwise() - out.center.transpose()).rowwise().norm().maxCoeff();
  if (out.scale == 0.0) {
    throw std::invalid_argument(
        "normalize_unit_sphere: all reference points coincide (scale 0)");
  }
  out.pred = pred;
  out.reference = reference;
  out.pred.coords = (pred.coords.rowwise() - out.center.transpose()) / out.scale;
  out.reference.coords =
      (reference.coords.rowwise() - out.center.transpose()) / out.scale;
  return out;
}

} // namespace p2pb
