#pragma once

#include "p2pb/types.hpp"

#include <vector>

namespace p2pb {

/// Greedy max-min farthest point sampling over rows of `coords`, starting at
/// `start`. Deterministic; returns k indices in selection order.
std::vector<int> farthest_point_sampling(const Eigen::Ref<const MatX3>& coords,
                                         int k, int start);

/// Axis-aligned bounding box diagonal length.
double bbox_diagonal(const Eigen::Ref<const MatX3>& coords);

struct NormalizeResult {
  PointCloud pred;
  PointCloud reference;
  Vec3 center;  // centroid of the reference cloud
  double scale; // max distance of reference points from the center
};

/// Centers and scales both clouds into the unit sphere using the reference
/// cloud's centroid and max radius; the same transform is applied to `pred`.
/// Errors if all reference points coincide (scale would be zero).
NormalizeResult normalize_unit_sphere(const PointCloud& pred,
                                      const PointCloud& reference);

} // namespace p2pb
