#include "p2pb/types.hpp"

namespace p2pb {

void PointCloud::validate() const {
  if (coords.rows() < 1) {
    throw std::invalid_argument("PointCloud: must contain at least one point");
  }
  if (!coords.allFinite()) {
    throw std::invalid_argument("PointCloud: coords contain NaN or Inf");
  }
  if (features.rows() != coords.rows()) {
    throw std::invalid_argument("PointCloud: features must have one row per point");
  }
  if (features.size() > 0 && !features.allFinite()) {
    throw std::invalid_argument("PointCloud: features contain NaN or Inf");
  }
}

double TriangleMesh::face_area(Eigen::Index f) const {
  const Vec3 a = vertices.row(faces(f, 0));
  const Vec3 b = vertices.row(faces(f, 1));
  const Vec3 c = vertices.row(faces(f, 2));
  return 0.5 * (b - a).cross(c - a).norm();
}

void TriangleMesh::validate() const {
  if (!vertices.allFinite()) {
    throw std::invalid_argument("TriangleMesh: vertices contain NaN or Inf");
  }
  const Eigen::Index v = vertices.rows();
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      const int idx = faces(f, j);
      if (idx < 0 || idx >= v) {
        throw std::invalid_argument("TriangleMesh: face index out of range");
      }
    }
    if (face_area(f) == 0.0) {
      throw std::invalid_argument("TriangleMesh: degenerate (zero-area) face");
    }
  }
}

} // namespace p2pb
