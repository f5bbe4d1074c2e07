#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace p2pb {

using Scalar = double;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
using MatXX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using FacesX3 = Eigen::Matrix<int, Eigen::Dynamic, 3>;

/// A set of N points, one per row, with optional per-point feature vectors.
struct PointCloud {
  MatX3 coords;   // N x 3
  MatXX features; // N x F, F may be 0

  PointCloud() : coords(0, 3), features(0, 0) {}
  explicit PointCloud(MatX3 c) : coords(std::move(c)) {
    features.resize(coords.rows(), 0);
  }
  PointCloud(MatX3 c, MatXX f) : coords(std::move(c)), features(std::move(f)) {
    if (features.rows() != coords.rows()) {
      throw std::invalid_argument("PointCloud: features must have one row per point");
    }
  }

  Eigen::Index size() const { return coords.rows(); }
  Eigen::Index feature_width() const { return features.cols(); }
  bool has_features() const { return features.cols() > 0; }

  // Throws if empty, if feature rows mismatch, or if any value is non-finite.
  void validate() const;
};

/// Indexed triangle mesh (counter-clockwise faces, no degenerate triangles).
struct TriangleMesh {
  MatX3 vertices; // V x 3
  FacesX3 faces;  // K x 3 vertex indices

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index face_count() const { return faces.rows(); }

  double face_area(Eigen::Index f) const;

  // Throws on out-of-range indices or zero-area faces.
  void validate() const;
};

} // namespace p2pb
