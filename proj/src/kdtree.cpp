#include "p2pb/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace p2pb {

KdTree::KdTree(const Eigen::Ref<const MatX3>& points, int leaf_size)
    : pts_(points), leaf_size_(leaf_size) {
  if (pts_.rows() == 0) {
    throw std::invalid_argument("KdTree: cannot index an empty point set");
  }
  if (leaf_size_ < 1) {
    throw std::invalid_argument("KdTree: leaf size must be positive");
  }
  order_.resize(static_cast<std::size_t>(pts_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * pts_.rows() / leaf_size_ + 2));
  root_ = build(0, static_cast<int>(pts_.rows()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);

  if (end - begin <= leaf_size_) {
    return node_id;
  }

  // Split on the widest axis at the median.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(pts_.row(order_[i]).transpose());
    hi = hi.cwiseMax(pts_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) {
    // All points coincide on every axis; keep as one leaf.
    return node_id;
  }

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     return pts_(a, axis) < pts_(b, axis);
                   });

  nodes_[node_id].axis = axis;
  nodes_[node_id].split = pts_(order_[mid], axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void KdTree::nearest_rec(int node_id, const Vec3& q, double& best_d2,
                         int& best_idx) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
        best_d2 = d2;
        best_idx = idx;
      }
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  nearest_rec(near, q, best_d2, best_idx);
  if (delta * delta <= best_d2) {
    nearest_rec(far, q, best_d2, best_idx);
  }
}

std::pair<int, double> KdTree::nearest(const Vec3& query) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_idx = static_cast<int>(pts_.rows());
  nearest_rec(root_, query, best_d2, best_idx);
  return {best_idx, std::sqrt(best_d2)};
}

void KdTree::knn_rec(int node_id, const Vec3& q, int k,
                     std::vector<KnnEntry>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
      const KnnEntry entry{d2, idx};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(entry);
        std::push_heap(heap.begin(), heap.end());
      } else if (entry < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = entry;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  knn_rec(near, q, k, heap);
  if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().d2) {
    knn_rec(far, q, k, heap);
  }
}

void KdTree::knn(const Vec3& query, int k, std::vector<int>& indices,
                 std::vector<double>& distances) const {
  indices.clear();
  distances.clear();
  if (k < 1) {
    return;
  }
  std::vector<KnnEntry> heap;
  heap.reserve(static_cast<std::size_t>(k));
  knn_rec(root_, query, k, heap);
  std::sort(heap.begin(), heap.end());
  indices.reserve(heap.size());
  distances.reserve(heap.size());
  for (const KnnEntry& e : heap) {
    indices.push_back(e.idx);
    distances.push_back(std::sqrt(e.d2));
  }
}

void KdTree::radius_rec(int node_id, const Vec3& q, double r2,
                        std::vector<int>& out) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
      if (d2 <= r2) {
        out.push_back(idx);
      }
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const int near = delta < 0 ? node.left : node.right;
  const int far = delta < 0 ? node.right : node.left;
  radius_rec(near, q, r2, out);
  if (delta * delta <= r2) {
    radius_rec(far, q, r2, out);
  }
}

std::vector<int> KdTree::radius(const Vec3& center, double r) const {
  if (r <= 0.0) {
    throw std::invalid_argument("KdTree: radius must be positive");
  }
  std::vector<int> out;
  radius_rec(root_, center, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

KdTree build_index(const PointCloud& cloud, int leaf_size) {
  if (cloud.size() == 0) {
    throw std::invalid_argument("build_index: empty cloud");
  }
  return KdTree(cloud.coords, leaf_size);
}

} // namespace p2pb
