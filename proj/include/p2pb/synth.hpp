#pragma once

#include "p2pb/train.hpp"
#include "p2pb/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace p2pb {

enum class PrimitiveKind { Sphere, Torus, Box };

PrimitiveKind primitive_kind_from_string(const std::string& name);

/// Watertight analytic meshes. Sphere: UV sphere of radius size_a. Torus:
/// major radius size_a, minor radius size_b, res x res grid. Box: cube with
/// edge size_a, 12 triangles (resolution ignored).
TriangleMesh make_primitive(PrimitiveKind kind, int resolution, double size_a,
                            double size_b = 0.0);

/// Area-weighted uniform surface samples with uniform barycentric placement.
PointCloud sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);

/// Gaussian corruption whose per-coordinate standard deviation is a fraction
/// of the clean cloud's bounding-box diagonal.
struct NoiseSpec {
  double percent = 0.02;
  std::uint64_t seed = 0;
};

double noise_std(const PointCloud& clean, const NoiseSpec& spec);
PointCloud add_gaussian_noise(const PointCloud& cloud, const NoiseSpec& spec);

/// For each (mesh, spec): sample a clean cloud, corrupt it, solve the
/// assignment (exact under `solver_cap`, chunked above), and reorder the
/// clean cloud so the pair is index-aligned.
std::vector<PairedSample> build_pairs(const std::vector<TriangleMesh>& meshes,
                                      int points, const std::vector<NoiseSpec>& specs,
                                      std::uint64_t seed, int solver_cap = 4096);

/// On-disk dataset layout: per pair a noisy PLY, the clean PLY in its
/// original (pre-reorder) order, and the permutation sidecar, plus a
/// manifest.json listing them.
void write_dataset(const std::vector<PairedSample>& pairs,
                   const std::filesystem::path& dir);
std::vector<PairedSample> load_dataset(const std::filesystem::path& dir);

} // namespace p2pb
