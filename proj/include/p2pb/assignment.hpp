#pragma once

#include "p2pb/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace p2pb {

enum class CostKind { SquaredEuclidean, Euclidean };

/// Bijective matching of a noisy point set onto a clean one: perm[i] is the
/// clean index paired with noisy point i. The solve happens once per data
/// pair; training only ever replays the cached permutation.
struct Assignment {
  std::vector<int> perm;
  double cost = 0.0;
  CostKind cost_kind = CostKind::SquaredEuclidean;

  bool is_bijection() const;
};

/// Sum over i of the pairwise cost between noisy point i and clean point
/// perm[i]; the quantity Assignment::cost must always reproduce.
double assignment_cost(const PointCloud& noisy, const PointCloud& clean,
                       const std::vector<int>& perm, CostKind kind);

/// Makes a clean cloud match a target point count: farthest-point subsample
/// when too large, seeded random duplication when too small.
PointCloud resample_to_match(const PointCloud& clean, int n, std::uint64_t seed);

/// Exact minimum-cost bijection (Hungarian algorithm on the dense pairwise
/// cost matrix). Throws when the clouds disagree in size or exceed
/// `solver_cap` (use approximate_assignment beyond the cap).
Assignment optimal_assignment(const PointCloud& noisy, const PointCloud& clean,
                              CostKind kind = CostKind::SquaredEuclidean,
                              int solver_cap = 4096);

/// Scales the exact solver to large N: both clouds are partitioned into
/// matched spatial chunks (FPS centers on the noisy cloud, counts equalized
/// by moving surplus points to the nearest deficit chunk) and the Hungarian
/// solver runs inside each chunk. Always returns a valid bijection; cost is
/// an upper bound on the exact optimum.
Assignment approximate_assignment(const PointCloud& noisy, const PointCloud& clean,
                                  int chunk, std::uint64_t seed,
                                  CostKind kind = CostKind::SquaredEuclidean);

/// Reorders rows (coords and features) so row i of the result is clean row
/// perm[i]; afterwards index i in the noisy cloud corresponds to index i in
/// the clean cloud.
PointCloud apply_assignment(const PointCloud& clean, const Assignment& a);

/// Sidecar format: u32 point count followed by that many u32 indices, all
/// little-endian. Cost is not stored; reload recomputes it from the clouds.
void save_assignment_sidecar(const Assignment& a, const std::filesystem::path& path);
std::vector<int> load_assignment_sidecar(const std::filesystem::path& path);

} // namespace p2pb
