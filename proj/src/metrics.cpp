#include "p2pb/metrics.hpp"

#include "p2pb/cloud_ops.hpp"
#include "p2pb/kdtree.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace p2pb {

ChamferResult chamfer(const PointCloud& pred, const PointCloud& gt) {
  if (pred.size() == 0 || gt.size() == 0) {
    throw std::invalid_argument("chamfer: clouds must be non-empty");
  }
  const KdTree pred_tree(pred.coords);
  const KdTree gt_tree(gt.coords);

  double fwd = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const auto [idx, dist] = gt_tree.nearest(pred.coords.row(i).transpose());
    fwd += (pred.coords.row(i) - gt.coords.row(idx)).squaredNorm();
  }
  fwd /= 2.0 * static_cast<double>(pred.size());

  double bwd = 0.0;
  for (Eigen::Index j = 0; j < gt.size(); ++j) {
    const auto [idx, dist] = pred_tree.nearest(gt.coords.row(j).transpose());
    bwd += (gt.coords.row(j) - pred.coords.row(idx)).squaredNorm();
  }
  bwd /= 2.0 * static_cast<double>(gt.size());

  return {fwd + bwd, fwd, bwd};
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  // Closest point on a triangle via barycentric region tests (Ericson,
  // Real-Time Collision Detection, 5.1.5).
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;

  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm(); // vertex a

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm(); // vertex b

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm(); // edge ab
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm(); // vertex c

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm(); // edge ac
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm(); // edge bc
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm(); // interior
}

P2MResult point_to_mesh(const PointCloud& pred, const TriangleMesh& mesh) {
  if (pred.size() == 0) {
    throw std::invalid_argument("point_to_mesh: empty prediction");
  }
  if (mesh.face_count() == 0) {
    throw std::invalid_argument("point_to_mesh: mesh has no faces");
  }

  const Eigen::Index n = pred.size();
  const Eigen::Index k = mesh.face_count();

  // Per-face minimum over points falls out of the same pass as the per-point
  // minimum over faces.
  VecX face_min = VecX::Constant(k, std::numeric_limits<double>::infinity());
  double p2f = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = pred.coords.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < k; ++f) {
      const double d = point_triangle_distance(p, mesh.vertices.row(mesh.faces(f, 0)),
                                               mesh.vertices.row(mesh.faces(f, 1)),
                                               mesh.vertices.row(mesh.faces(f, 2)));
      if (d < best) best = d;
      if (d < face_min[f]) face_min[f] = d;
    }
    p2f += best;
  }
  p2f /= 2.0 * static_cast<double>(n);

  double f2p = 0.0;
  for (Eigen::Index f = 0; f < k; ++f) {
    f2p += face_min[f];
  }
  f2p /= 2.0 * static_cast<double>(k);

  return {p2f + f2p, p2f, f2p};
}

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt,
                      const TriangleMesh* gt_mesh, bool normalize,
                      double report_scale) {
  PointCloud p = pred;
  PointCloud g = gt;
  TriangleMesh mesh;
  if (gt_mesh != nullptr) {
    mesh = *gt_mesh;
  }
  if (normalize) {
    const NormalizeResult norm = normalize_unit_sphere(pred, gt);
    p = norm.pred;
    g = norm.reference;
    if (gt_mesh != nullptr) {
      mesh.vertices =
          (mesh.vertices.rowwise() - norm.center.transpose()) / norm.scale;
    }
  }

  MetricReport report;
  report.scale_factor = report_scale;
  const ChamferResult cd = chamfer(p, g);
  report.cd_forward = cd.forward * report_scale;
  report.cd_backward = cd.backward * report_scale;
  report.cd = report.cd_forward + report.cd_backward;
  if (gt_mesh != nullptr) {
    const P2MResult pm = point_to_mesh(p, mesh);
    report.p2f = pm.p2f * report_scale;
    report.f2p = pm.f2p * report_scale;
    report.p2m = *report.p2f + *report.f2p;
  }
  return report;
}

std::string format_report(const MetricReport& report) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "metric       value\n";
  os << "cd           " << fmt(report.cd) << "\n";
  os << "cd_forward   " << fmt(report.cd_forward) << "\n";
  os << "cd_backward  " << fmt(report.cd_backward) << "\n";
  if (report.p2m.has_value()) {
    os << "p2m          " << fmt(*report.p2m) << "\n";
    os << "p2f          " << fmt(*report.p2f) << "\n";
    os << "f2p          " << fmt(*report.f2p) << "\n";
  }
  os << "scale        " << fmt(report.scale_factor) << "\n";
  return os.str();
}

} // namespace p2pb
