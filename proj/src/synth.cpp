#include "p2pb/synth.hpp"

#include "p2pb/cloud_ops.hpp"
#include "p2pb/io.hpp"
#include "p2pb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace p2pb {

namespace {

TriangleMesh make_sphere(double radius, int res) {
  if (radius <= 0.0) {
    throw std::invalid_argument("make_primitive: sphere radius must be positive");
  }
  const int res_u = res;     // longitude
  const int res_v = res;     // latitude bands
  std::vector<Vec3> verts;
  verts.emplace_back(0.0, 0.0, radius); // north pole
  for (int i = 1; i < res_v; ++i) {
    const double theta = std::numbers::pi * i / res_v;
    for (int j = 0; j < res_u; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / res_u;
      verts.emplace_back(radius * std::sin(theta) * std::cos(phi),
                         radius * std::sin(theta) * std::sin(phi),
                         radius * std::cos(theta));
    }
  }
  verts.emplace_back(0.0, 0.0, -radius); // south pole
  const int south = static_cast<int>(verts.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * res_u + (j % res_u); };

  std::vector<std::array<int, 3>> faces;
  for (int j = 0; j < res_u; ++j) {
    faces.push_back({0, ring(1, j), ring(1, j + 1)});
  }
  for (int i = 1; i + 1 < res_v; ++i) {
    for (int j = 0; j < res_u; ++j) {
      const int a = ring(i, j), b = ring(i, j + 1);
      const int c = ring(i + 1, j), d = ring(i + 1, j + 1);
      faces.push_back({a, c, d});
      faces.push_back({a, d, b});
    }
  }
  for (int j = 0; j < res_u; ++j) {
    faces.push_back({south, ring(res_v - 1, j + 1), ring(res_v - 1, j)});
  }

  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    mesh.vertices.row(i) = verts[static_cast<std::size_t>(i)].transpose();
  }
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      mesh.faces(f, j) = faces[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)];
    }
  }
  return mesh;
}

TriangleMesh make_torus(double major, double minor, int res) {
  if (major <= 0.0 || minor <= 0.0 || minor >= major) {
    throw std::invalid_argument(
        "make_primitive: torus needs 0 < minor radius < major radius");
  }
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(res) * res, 3);
  for (int i = 0; i < res; ++i) {
    const double u = 2.0 * std::numbers::pi * i / res;
    for (int j = 0; j < res; ++j) {
      const double v = 2.0 * std::numbers::pi * j / res;
      const double rad = major + minor * std::cos(v);
      mesh.vertices.row(static_cast<Eigen::Index>(i) * res + j) << rad * std::cos(u),
          rad * std::sin(u), minor * std::sin(v);
    }
  }
  mesh.faces.resize(2 * static_cast<Eigen::Index>(res) * res, 3);
  Eigen::Index f = 0;
  auto vid = [&](int i, int j) { return (i % res) * res + (j % res); };
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      mesh.faces.row(f++) << a, b, c;
      mesh.faces.row(f++) << a, c, d;
    }
  }
  return mesh;
}

TriangleMesh make_box(double size) {
  if (size <= 0.0) {
    throw std::invalid_argument("make_primitive: box size must be positive");
  }
  const double h = size / 2.0;
  TriangleMesh mesh;
  mesh.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.row(i) << (i & 1 ? h : -h), (i & 2 ? h : -h), (i & 4 ? h : -h);
  }
  // two triangles per cube face, outward-facing
  const int quads[6][4] = {
      {0, 2, 3, 1}, // z-
      {4, 5, 7, 6}, // z+
      {0, 1, 5, 4}, // y-
      {2, 6, 7, 3}, // y+
      {0, 4, 6, 2}, // x-
      {1, 3, 7, 5}, // x+
  };
  mesh.faces.resize(12, 3);
  for (int q = 0; q < 6; ++q) {
    mesh.faces.row(2 * q) << quads[q][0], quads[q][1], quads[q][2];
    mesh.faces.row(2 * q + 1) << quads[q][0], quads[q][2], quads[q][3];
  }
  return mesh;
}

std::string cost_kind_name(CostKind kind) {
  return kind == CostKind::SquaredEuclidean ? "squared_euclidean" : "euclidean";
}

CostKind cost_kind_from_name(const std::string& name) {
  if (name == "squared_euclidean") return CostKind::SquaredEuclidean;
  if (name == "euclidean") return CostKind::Euclidean;
  throw std::runtime_error("unknown cost kind '" + name + "'");
}

} // namespace

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::Sphere;
  if (name == "torus") return PrimitiveKind::Torus;
  if (name == "box") return PrimitiveKind::Box;
  throw std::invalid_argument("unknown primitive '" + name +
                              "' (expected sphere, torus or box)");
}

TriangleMesh make_primitive(PrimitiveKind kind, int resolution, double size_a,
                            double size_b) {
  if (resolution < 3) {
    throw std::invalid_argument("make_primitive: resolution must be >= 3");
  }
  switch (kind) {
    case PrimitiveKind::Sphere: return make_sphere(size_a, resolution);
    case PrimitiveKind::Torus: return make_torus(size_a, size_b, resolution);
    case PrimitiveKind::Box: return make_box(size_a);
  }
  throw std::invalid_argument("make_primitive: unknown kind");
}

PointCloud sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("sample_mesh_surface: n must be >= 1");
  }
  const Eigen::Index k = mesh.face_count();
  if (k == 0) {
    throw std::invalid_argument("sample_mesh_surface: mesh has no faces");
  }
  std::vector<double> cumulative(static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index f = 0; f < k; ++f) {
    total += mesh.face_area(f);
    cumulative[static_cast<std::size_t>(f)] = total;
  }
  if (total <= 0.0) {
    throw std::invalid_argument("sample_mesh_surface: mesh has zero total area");
  }

  Rng rng(seed);
  PointCloud cloud;
  cloud.coords.resize(n, 3);
  cloud.features.resize(n, 0);
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const Eigen::Index f = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(it - cumulative.begin()), k - 1);
    double r1 = rng.uniform();
    double r2 = rng.uniform();
    if (r1 + r2 > 1.0) { // fold back into the triangle
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
    cloud.coords.row(i) = (a + r1 * (b - a) + r2 * (c - a)).transpose();
  }
  return cloud;
}

double noise_std(const PointCloud& clean, const NoiseSpec& spec) {
  if (spec.percent < 0.0) {
    throw std::invalid_argument("NoiseSpec: percent must be >= 0");
  }
  const double diag = bbox_diagonal(clean.coords);
  if (diag == 0.0) {
    throw std::invalid_argument("add_gaussian_noise: cloud bounding box has zero extent");
  }
  return spec.percent * diag;
}

PointCloud add_gaussian_noise(const PointCloud& cloud, const NoiseSpec& spec) {
  cloud.validate();
  const double std_dev = noise_std(cloud, spec);
  PointCloud out = cloud;
  if (std_dev == 0.0) {
    return out;
  }
  Rng rng(spec.seed);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      out.coords(i, c) += std_dev * rng.normal();
    }
  }
  return out;
}

std::vector<PairedSample> build_pairs(const std::vector<TriangleMesh>& meshes,
                                      int points, const std::vector<NoiseSpec>& specs,
                                      std::uint64_t seed, int solver_cap) {
  if (meshes.empty() || specs.empty()) {
    throw std::invalid_argument("build_pairs: need at least one mesh and one spec");
  }
  std::vector<PairedSample> pairs;
  pairs.reserve(meshes.size() * specs.size());
  const Rng base(seed);
  std::size_t pair_idx = 0;
  for (std::size_t mi = 0; mi < meshes.size(); ++mi) {
    for (std::size_t si = 0; si < specs.size(); ++si, ++pair_idx) {
      const PointCloud clean =
          sample_mesh_surface(meshes[mi], points, base.derive(pair_idx).seed());
      NoiseSpec spec = specs[si];
      spec.seed = Rng(spec.seed).derive(pair_idx).seed();
      const PointCloud noisy = add_gaussian_noise(clean, spec);

      Assignment a;
      if (points <= solver_cap) {
        a = optimal_assignment(noisy, clean, CostKind::SquaredEuclidean, solver_cap);
      } else {
        a = approximate_assignment(noisy, clean, solver_cap,
                                   base.derive(pair_idx).seed());
      }

      PairedSample pair;
      pair.noisy = noisy;
      pair.clean_aligned = apply_assignment(clean, a);
      pair.assignment = std::move(a);
      pair.source_id = "pair_" + std::to_string(pair_idx);
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

void write_dataset(const std::vector<PairedSample>& pairs,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["pairs"] = nlohmann::json::array();
  for (const PairedSample& pair : pairs) {
    const std::string noisy_name = pair.source_id + "_noisy.ply";
    const std::string clean_name = pair.source_id + "_clean.ply";
    const std::string perm_name = pair.source_id + "_perm.bin";

    // The clean cloud is stored in its original order; the sidecar replays
    // the reordering on load.
    const std::vector<int>& perm = pair.assignment.perm;
    PointCloud clean_orig;
    clean_orig.coords.resize(pair.clean_aligned.size(), 3);
    clean_orig.features.resize(pair.clean_aligned.size(),
                               pair.clean_aligned.feature_width());
    for (Eigen::Index i = 0; i < pair.clean_aligned.size(); ++i) {
      clean_orig.coords.row(perm[static_cast<std::size_t>(i)]) =
          pair.clean_aligned.coords.row(i);
      if (pair.clean_aligned.has_features()) {
        clean_orig.features.row(perm[static_cast<std::size_t>(i)]) =
            pair.clean_aligned.features.row(i);
      }
    }

    write_ply(pair.noisy, dir / noisy_name, /*binary=*/true);
    write_ply(clean_orig, dir / clean_name, /*binary=*/true);
    save_assignment_sidecar(pair.assignment, dir / perm_name);

    manifest["pairs"].push_back({{"id", pair.source_id},
                                 {"noisy", noisy_name},
                                 {"clean", clean_name},
                                 {"assignment", perm_name},
                                 {"points", pair.noisy.size()},
                                 {"cost", pair.assignment.cost},
                                 {"cost_kind", cost_kind_name(pair.assignment.cost_kind)}});
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) {
    throw std::runtime_error("write_dataset: cannot open manifest in " + dir.string());
  }
  os << manifest.dump(2) << "\n";
}

std::vector<PairedSample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) {
    throw std::runtime_error("load_dataset: no manifest.json in " + dir.string());
  }
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: invalid manifest.json: " +
                             std::string(e.what()));
  }

  std::vector<PairedSample> pairs;
  for (const nlohmann::json& entry : manifest.at("pairs")) {
    PairedSample pair;
    pair.source_id = entry.at("id").get<std::string>();
    pair.noisy = read_ply_cloud(dir / entry.at("noisy").get<std::string>());
    const PointCloud clean_orig =
        read_ply_cloud(dir / entry.at("clean").get<std::string>());

    Assignment a;
    a.perm = load_assignment_sidecar(dir / entry.at("assignment").get<std::string>());
    a.cost_kind = cost_kind_from_name(entry.at("cost_kind").get<std::string>());
    a.cost = assignment_cost(pair.noisy, clean_orig, a.perm, a.cost_kind);
    const double recorded = entry.at("cost").get<double>();
    if (std::abs(a.cost - recorded) >
        1e-9 * std::max({1.0, std::abs(a.cost), std::abs(recorded)})) {
      throw std::runtime_error("load_dataset: pair '" + pair.source_id +
                               "' assignment cost does not match the manifest");
    }
    pair.clean_aligned = apply_assignment(clean_orig, a);
    pair.assignment = std::move(a);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

} // namespace p2pb
