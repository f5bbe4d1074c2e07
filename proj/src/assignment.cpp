#include "p2pb/assignment.hpp"

#include "p2pb/binary.hpp"
#include "p2pb/cloud_ops.hpp"
#include "p2pb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace p2pb {

namespace {

double pair_cost(const MatX3& a, int i, const MatX3& b, int j, CostKind kind) {
  const double d2 = (a.row(i) - b.row(j)).squaredNorm();
  return kind == CostKind::SquaredEuclidean ? d2 : std::sqrt(d2);
}

/// Hungarian algorithm with potentials, O(n^3). `cost` is row-major n x n;
/// returns perm with perm[row] = assigned column.
std::vector<int> solve_hungarian(const std::vector<double>& cost, int n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> col_to_row(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = col_to_row[static_cast<std::size_t>(j0)];
      const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = row[j - 1] - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < min_slack[static_cast<std::size_t>(j)]) {
          min_slack[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (min_slack[static_cast<std::size_t>(j)] < delta) {
          delta = min_slack[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          min_slack[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      col_to_row[static_cast<std::size_t>(j0)] = col_to_row[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> perm(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    perm[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return perm;
}

std::vector<double> cost_matrix(const PointCloud& noisy, const PointCloud& clean,
                                CostKind kind) {
  const int n = static_cast<int>(noisy.size());
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      cost[static_cast<std::size_t>(i) * n + j] =
          pair_cost(noisy.coords, i, clean.coords, j, kind);
    }
  }
  return cost;
}

} // namespace

bool Assignment::is_bijection() const {
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[static_cast<std::size_t>(p)]) {
      return false;
    }
    seen[static_cast<std::size_t>(p)] = 1;
  }
  return true;
}

double assignment_cost(const PointCloud& noisy, const PointCloud& clean,
                       const std::vector<int>& perm, CostKind kind) {
  if (perm.size() != static_cast<std::size_t>(noisy.size()) ||
      noisy.size() != clean.size()) {
    throw std::invalid_argument("assignment_cost: size mismatch");
  }
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(perm.size()); ++i) {
    total += pair_cost(noisy.coords, i, clean.coords, perm[static_cast<std::size_t>(i)], kind);
  }
  return total;
}

PointCloud resample_to_match(const PointCloud& clean, int n, std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("resample_to_match: target count must be >= 1");
  }
  if (clean.size() == 0) {
    throw std::invalid_argument("resample_to_match: empty cloud");
  }
  const int m = static_cast<int>(clean.size());
  if (m == n) {
    return clean;
  }

  std::vector<int> rows;
  if (m > n) {
    rows = farthest_point_sampling(clean.coords, n, 0);
  } else {
    rows.resize(static_cast<std::size_t>(m));
    std::iota(rows.begin(), rows.end(), 0);
    Rng rng(seed);
    while (static_cast<int>(rows.size()) < n) {
      rows.push_back(rng.uniform_int(m));
    }
  }

  PointCloud out;
  out.coords.resize(n, 3);
  out.features.resize(n, clean.feature_width());
  for (int i = 0; i < n; ++i) {
    out.coords.row(i) = clean.coords.row(rows[static_cast<std::size_t>(i)]);
    if (clean.has_features()) {
      out.features.row(i) = clean.features.row(rows[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

Assignment optimal_assignment(const PointCloud& noisy, const PointCloud& clean,
                              CostKind kind, int solver_cap) {
  if (noisy.size() != clean.size()) {
    throw std::invalid_argument("optimal_assignment: clouds must have equal size");
  }
  const int n = static_cast<int>(noisy.size());
  if (n == 0) {
    throw std::invalid_argument("optimal_assignment: empty clouds");
  }
  if (n > solver_cap) {
    throw std::invalid_argument(
        "optimal_assignment: N exceeds the exact-solver cap; use approximate_assignment");
  }

  Assignment a;
  a.cost_kind = kind;
  a.perm = solve_hungarian(cost_matrix(noisy, clean, kind), n);
  a.cost = assignment_cost(noisy, clean, a.perm, kind);
  return a;
}

Assignment approximate_assignment(const PointCloud& noisy, const PointCloud& clean,
                                  int chunk, std::uint64_t seed, CostKind kind) {
  if (noisy.size() != clean.size()) {
    throw std::invalid_argument("approximate_assignment: clouds must have equal size");
  }
  if (chunk < 1) {
    throw std::invalid_argument("approximate_assignment: chunk must be >= 1");
  }
  const int n = static_cast<int>(noisy.size());
  const int num_chunks = (n + chunk - 1) / chunk;
  if (num_chunks <= 1) {
    return optimal_assignment(noisy, clean, kind, n);
  }

  Rng rng(seed);
  const std::vector<int> center_ids =
      farthest_point_sampling(noisy.coords, num_chunks, rng.uniform_int(n));
  MatX3 centers(num_chunks, 3);
  for (int c = 0; c < num_chunks; ++c) {
    centers.row(c) = noisy.coords.row(center_ids[static_cast<std::size_t>(c)]);
  }

  auto nearest_center = [&](const Eigen::RowVector3d& p) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_chunks; ++c) {
      const double d2 = (p - centers.row(c)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    return best;
  };

  std::vector<int> noisy_chunk(static_cast<std::size_t>(n));
  std::vector<int> clean_chunk(static_cast<std::size_t>(n));
  std::vector<int> noisy_count(static_cast<std::size_t>(num_chunks), 0);
  std::vector<int> clean_count(static_cast<std::size_t>(num_chunks), 0);
  for (int i = 0; i < n; ++i) {
    noisy_chunk[static_cast<std::size_t>(i)] = nearest_center(noisy.coords.row(i));
    ++noisy_count[static_cast<std::size_t>(noisy_chunk[static_cast<std::size_t>(i)])];
    clean_chunk[static_cast<std::size_t>(i)] = nearest_center(clean.coords.row(i));
    ++clean_count[static_cast<std::size_t>(clean_chunk[static_cast<std::size_t>(i)])];
  }

  // Rebalance: move surplus clean points to the deficit chunk whose center
  // they are closest to, cheapest move first.
  while (true) {
    double best_d2 = std::numeric_limits<double>::infinity();
    int best_point = -1, best_dst = -1;
    for (int j = 0; j < n; ++j) {
      const int src = clean_chunk[static_cast<std::size_t>(j)];
      if (clean_count[static_cast<std::size_t>(src)] <=
          noisy_count[static_cast<std::size_t>(src)]) {
        continue;
      }
      for (int d = 0; d < num_chunks; ++d) {
        if (clean_count[static_cast<std::size_t>(d)] >=
            noisy_count[static_cast<std::size_t>(d)]) {
          continue;
        }
        const double d2 = (clean.coords.row(j) - centers.row(d)).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best_point = j;
          best_dst = d;
        }
      }
    }
    if (best_point < 0) {
      break;
    }
    --clean_count[static_cast<std::size_t>(clean_chunk[static_cast<std::size_t>(best_point)])];
    clean_chunk[static_cast<std::size_t>(best_point)] = best_dst;
    ++clean_count[static_cast<std::size_t>(best_dst)];
  }

  Assignment out;
  out.cost_kind = kind;
  out.perm.assign(static_cast<std::size_t>(n), -1);
  for (int c = 0; c < num_chunks; ++c) {
    std::vector<int> ni, ci;
    for (int i = 0; i < n; ++i) {
      if (noisy_chunk[static_cast<std::size_t>(i)] == c) ni.push_back(i);
      if (clean_chunk[static_cast<std::size_t>(i)] == c) ci.push_back(i);
    }
    if (ni.empty()) {
      continue;
    }
    const int m = static_cast<int>(ni.size());
    std::vector<double> cost(static_cast<std::size_t>(m) * m);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        cost[static_cast<std::size_t>(a) * m + b] = pair_cost(
            noisy.coords, ni[static_cast<std::size_t>(a)], clean.coords,
            ci[static_cast<std::size_t>(b)], kind);
      }
    }
    const std::vector<int> sub = solve_hungarian(cost, m);
    for (int a = 0; a < m; ++a) {
      out.perm[static_cast<std::size_t>(ni[static_cast<std::size_t>(a)])] =
          ci[static_cast<std::size_t>(sub[static_cast<std::size_t>(a)])];
    }
  }
  out.cost = assignment_cost(noisy, clean, out.perm, kind);
  return out;
}

PointCloud apply_assignment(const PointCloud& clean, const Assignment& a) {
  if (a.perm.size() != static_cast<std::size_t>(clean.size())) {
    throw std::invalid_argument("apply_assignment: permutation length mismatch");
  }
  PointCloud out;
  out.coords.resize(clean.size(), 3);
  out.features.resize(clean.size(), clean.feature_width());
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    const int src = a.perm[static_cast<std::size_t>(i)];
    out.coords.row(i) = clean.coords.row(src);
    if (clean.has_features()) {
      out.features.row(i) = clean.features.row(src);
    }
  }
  return out;
}

void save_assignment_sidecar(const Assignment& a, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("save_assignment_sidecar: cannot open " + path.string());
  }
  write_u32_le(os, static_cast<std::uint32_t>(a.perm.size()));
  for (int p : a.perm) {
    write_u32_le(os, static_cast<std::uint32_t>(p));
  }
  if (!os) {
    throw std::runtime_error("save_assignment_sidecar: write failed for " + path.string());
  }
}

std::vector<int> load_assignment_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_assignment_sidecar: cannot open " + path.string());
  }
  std::uint32_t n = 0;
  if (!read_u32_le(is, n)) {
    throw std::runtime_error("load_assignment_sidecar: truncated header");
  }
  std::vector<int> perm(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t v = 0;
    if (!read_u32_le(is, v)) {
      throw std::runtime_error("load_assignment_sidecar: truncated payload");
    }
    perm[i] = static_cast<int>(v);
  }
  return perm;
}

} // namespace p2pb
