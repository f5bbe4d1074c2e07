#pragma once

#include "p2pb/types.hpp"

#include <utility>
#include <vector>

namespace p2pb {

struct PointCloud;

/// Exact kd-tree over the rows of an N x 3 coordinate matrix.
///
/// Queries return exactly what an exhaustive scan would: nearest-neighbor
/// ties are broken toward the lowest point index, radius results come back
/// in ascending index order, and pruning is deliberately non-strict so that
/// equal-distance candidates in pruned subtrees are still visited. The tree
/// is immutable after construction and safe for concurrent reads.
class KdTree {
 public:
  explicit KdTree(const Eigen::Ref<const MatX3>& points, int leaf_size = 16);

  Eigen::Index size() const { return pts_.rows(); }

  /// Index of the closest stored point and its Euclidean distance.
  std::pair<int, double> nearest(const Vec3& query) const;

  /// The k closest points ordered by (distance, index). Returns fewer than k
  /// entries only when the tree holds fewer than k points.
  void knn(const Vec3& query, int k, std::vector<int>& indices,
           std::vector<double>& distances) const;

  /// All indices with distance <= r from center, ascending.
  std::vector<int> radius(const Vec3& center, double r) const;

 private:
  struct Node {
    int left = -1;
    int right = -1;
    int begin = 0; // leaf range into order_
    int end = 0;
    int axis = 0;
    double split = 0.0;
  };

  int build(int begin, int end);

  struct KnnEntry {
    double d2;
    int idx;
    bool operator<(const KnnEntry& o) const {
      return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
    }
  };

  void nearest_rec(int node, const Vec3& q, double& best_d2, int& best_idx) const;
  void knn_rec(int node, const Vec3& q, int k, std::vector<KnnEntry>& heap) const;
  void radius_rec(int node, const Vec3& q, double r2, std::vector<int>& out) const;

  MatX3 pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_ = 16;
};

/// Builds an index over a cloud's coordinates. Errors on an empty cloud.
KdTree build_index(const PointCloud& cloud, int leaf_size = 16);

} // namespace p2pb
