#pragma once

#include "p2pb/types.hpp"

#include <optional>
#include <string>

namespace p2pb {

struct ChamferResult {
  double cd = 0.0;
  double forward = 0.0;  // (1/2n) sum of squared NN distances pred -> gt
  double backward = 0.0; // (1/2m) sum of squared NN distances gt -> pred
};

/// Symmetric squared-nearest-neighbor distance between two clouds. The
/// kd-tree accelerated result is bit-identical to an exhaustive scan.
ChamferResult chamfer(const PointCloud& pred, const PointCloud& gt);

/// Euclidean distance from p to the closed triangle (a, b, c).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

struct P2MResult {
  double p2m = 0.0;
  double p2f = 0.0; // (1/2n) sum over points of min face distance
  double f2p = 0.0; // (1/2K) sum over faces of min point distance
};

/// Point-to-mesh distance: average point-to-nearest-face plus average
/// face-to-nearest-point, unsquared.
P2MResult point_to_mesh(const PointCloud& pred, const TriangleMesh& mesh);

struct MetricReport {
  double cd = 0.0;
  double cd_forward = 0.0;
  double cd_backward = 0.0;
  std::optional<double> p2m;
  std::optional<double> p2f;
  std::optional<double> f2p;
  double scale_factor = 1e4;
};

/// Full evaluation. When `normalize` is set, both clouds (and the mesh, when
/// given) are centered/scaled to the unit sphere using the ground-truth
/// cloud's transform first. All values are multiplied by `report_scale`.
MetricReport evaluate(const PointCloud& pred, const PointCloud& gt,
                      const TriangleMesh* gt_mesh, bool normalize,
                      double report_scale = 1e4);

/// Aligned two-column text table, 4 significant digits.
std::string format_report(const MetricReport& report);

} // namespace p2pb
