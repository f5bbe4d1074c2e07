#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "p2pb/io.hpp"
#include "p2pb/rng.hpp"

#include "test_helpers.hpp"

#include <filesystem>
#include <fstream>

using namespace p2pb;
using p2pb::testing::random_cloud;
using p2pb::testing::same_bits;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("p2pb_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

} // namespace

TEST_CASE("ascii ply with two vertices") {
  TempDir dir;
  const fs::path p = dir.path / "two.ply";
  write_text(p,
             "ply\n"
             "format ascii 1.0\n"
             "element vertex 2\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n"
             "0 0 0\n"
             "1 2 3\n");
  const PointCloud cloud = read_ply_cloud(p);
  CHECK(cloud.size() == 2);
  CHECK(cloud.coords(1, 2) == 3.0);
  CHECK(cloud.feature_width() == 0);
}

TEST_CASE("binary ply round-trips coords bit-exactly") {
  TempDir dir;
  Rng rng(1);
  const PointCloud cloud = random_cloud(rng, 257, 100.0);
  const fs::path p = dir.path / "rt.ply";
  write_ply(cloud, p, /*binary=*/true);
  const PointCloud back = read_ply_cloud(p);
  CHECK(same_bits(back.coords, cloud.coords));
}

TEST_CASE("ascii ply round-trips coords bit-exactly via %.17g") {
  TempDir dir;
  Rng rng(2);
  const PointCloud cloud = random_cloud(rng, 31, 3.0);
  const fs::path p = dir.path / "rt_ascii.ply";
  write_ply(cloud, p, /*binary=*/false);
  CHECK(same_bits(read_ply_cloud(p).coords, cloud.coords));
}

TEST_CASE("uchar colors become [0,1] features") {
  TempDir dir;
  const fs::path p = dir.path / "rgb.ply";
  write_text(p,
             "ply\n"
             "format ascii 1.0\n"
             "element vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n"
             "0 0 0 255 0 0\n");
  const PointCloud cloud = read_ply_cloud(p);
  REQUIRE(cloud.feature_width() == 3);
  CHECK(cloud.features(0, 0) == 1.0);
  CHECK(cloud.features(0, 1) == 0.0);
  CHECK(cloud.features(0, 2) == 0.0);
}

TEST_CASE("color flag writes uchar red/green/blue") {
  TempDir dir;
  PointCloud cloud;
  cloud.coords.resize(1, 3);
  cloud.coords << 1, 2, 3;
  cloud.features.resize(1, 3);
  cloud.features << 1.0, 0.0, 0.5;
  const fs::path p = dir.path / "color.ply";
  write_ply(cloud, p, /*binary=*/false, /*color=*/true);

  std::ifstream is(p);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("property uchar red") != std::string::npos);
  const PointCloud back = read_ply_cloud(p);
  REQUIRE(back.feature_width() == 3);
  CHECK(back.features(0, 0) == 1.0);
  CHECK(back.features(0, 2) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("extra float features round-trip as f_k columns") {
  TempDir dir;
  PointCloud cloud;
  cloud.coords.resize(2, 3);
  cloud.coords << 0, 0, 0, 1, 1, 1;
  cloud.features.resize(2, 2);
  cloud.features << 0.25, -3.5, 7.0, 0.125;
  const fs::path p = dir.path / "feat.ply";
  write_ply(cloud, p, /*binary=*/true);
  const PointCloud back = read_ply_cloud(p);
  REQUIRE(back.feature_width() == 2);
  CHECK(same_bits(back.features, cloud.features));
}

TEST_CASE("mesh ply round-trips faces") {
  TempDir dir;
  TriangleMesh mesh;
  mesh.vertices.resize(4, 3);
  mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  mesh.faces.resize(2, 3);
  mesh.faces << 0, 1, 2, 0, 2, 3;
  for (const bool binary : {false, true}) {
    const fs::path p = dir.path / (binary ? "mesh_b.ply" : "mesh_a.ply");
    write_ply(mesh, p, binary);
    const TriangleMesh back = read_ply_mesh(p);
    CHECK(same_bits(back.vertices, mesh.vertices));
    CHECK(same_bits(back.faces, mesh.faces));
  }
}

TEST_CASE("ply error paths") {
  TempDir dir;
  const fs::path missing_xyz = dir.path / "noz.ply";
  write_text(missing_xyz,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nend_header\n0 0\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_ply(missing_xyz)),
                       doctest::Contains("x/y/z"), std::runtime_error);

  const fs::path big_endian = dir.path / "be.ply";
  write_text(big_endian,
             "ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_ply(big_endian)),
                       doctest::Contains("big-endian"), std::runtime_error);

  const fs::path not_ply = dir.path / "not.ply";
  write_text(not_ply, "hello\n");
  CHECK_THROWS_AS(static_cast<void>(read_ply(not_ply)), std::runtime_error);

  const fs::path truncated = dir.path / "short.ply";
  write_text(truncated,
             "ply\nformat ascii 1.0\nelement vertex 2\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n"
             "0 0 0\n");
  CHECK_THROWS_AS(static_cast<void>(read_ply(truncated)), std::runtime_error);

  CHECK_THROWS_AS(static_cast<void>(read_ply(dir.path / "absent.ply")),
                  std::runtime_error);
}

TEST_CASE("obj single triangle and quad fan") {
  TempDir dir;
  const fs::path tri = dir.path / "tri.obj";
  write_text(tri, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  const TriangleMesh m1 = read_obj(tri);
  CHECK(m1.face_count() == 1);
  CHECK(m1.faces(0, 0) == 0);
  CHECK(m1.faces(0, 2) == 2);

  const fs::path quad = dir.path / "quad.obj";
  write_text(quad, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  const TriangleMesh m2 = read_obj(quad);
  REQUIRE(m2.face_count() == 2);
  CHECK(m2.faces(0, 0) == 0);
  CHECK(m2.faces(0, 1) == 1);
  CHECK(m2.faces(0, 2) == 2);
  CHECK(m2.faces(1, 0) == 0);
  CHECK(m2.faces(1, 1) == 2);
  CHECK(m2.faces(1, 2) == 3);
}

TEST_CASE("obj negative indices are relative") {
  TempDir dir;
  const fs::path p = dir.path / "neg.obj";
  write_text(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
  const TriangleMesh m = read_obj(p);
  REQUIRE(m.face_count() == 1);
  CHECK(m.faces(0, 0) == 0);
  CHECK(m.faces(0, 1) == 1);
  CHECK(m.faces(0, 2) == 2);
}

TEST_CASE("obj slash-formatted face tokens parse") {
  TempDir dir;
  const fs::path p = dir.path / "slash.obj";
  write_text(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1\n");
  CHECK(read_obj(p).face_count() == 1);
}

TEST_CASE("obj error paths") {
  TempDir dir;
  const fs::path bad = dir.path / "bad.obj";
  write_text(bad, "v 0 0 0\nf 1 nope 2\n");
  CHECK_THROWS_AS(static_cast<void>(read_obj(bad)), std::runtime_error);

  const fs::path out_of_range = dir.path / "oor.obj";
  write_text(out_of_range, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_obj(out_of_range)),
                       doctest::Contains("out of range"), std::runtime_error);
}

TEST_CASE("xyz parses rows, features and blank lines") {
  TempDir dir;
  const fs::path p = dir.path / "pts.xyz";
  write_text(p, "0 0 0\n\n1 0 0\n");
  CHECK(read_xyz(p).size() == 2);

  const fs::path feat = dir.path / "feat.xyz";
  write_text(feat, "0 0 0 9 8\n1 1 1 7 6\n");
  const PointCloud cloud = read_xyz(feat);
  REQUIRE(cloud.feature_width() == 2);
  CHECK(cloud.features(1, 1) == 6.0);

  const fs::path bad = dir.path / "bad.xyz";
  write_text(bad, "0 0 zero\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_xyz(bad)),
                       doctest::Contains("non-numeric"), std::runtime_error);
}

TEST_CASE("xyz round-trip within text precision") {
  TempDir dir;
  Rng rng(3);
  PointCloud cloud = random_cloud(rng, 64, 10.0);
  cloud.features.resize(64, 1);
  for (int i = 0; i < 64; ++i) cloud.features(i, 0) = rng.uniform(-5, 5);
  const fs::path p = dir.path / "rt.xyz";
  write_xyz(cloud, p);
  const PointCloud back = read_xyz(p);
  REQUIRE(back.size() == cloud.size());
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    CHECK((back.coords.row(i) - cloud.coords.row(i)).norm() < 1e-6);
    CHECK(std::abs(back.features(i, 0) - cloud.features(i, 0)) < 1e-6);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  TempDir dir;
  Rng rng(7);
  VecX params(1000);
  for (int i = 0; i < 1000; ++i) {
    params[i] = static_cast<float>(rng.uniform(-2, 2)); // f32-representable
  }
  nlohmann::json header;
  header["denoiser"] = {{"hidden_width", 8}};
  const fs::path p = dir.path / "model.ckpt";
  save_checkpoint(params, header, p);

  const Checkpoint ckpt = load_checkpoint(p);
  CHECK(same_bits(ckpt.params, params));
  CHECK(ckpt.header["denoiser"]["hidden_width"] == 8);
  CHECK(ckpt.header["param_count"] == 1000);

  // save(load(x)) writes identical bytes
  const fs::path p2 = dir.path / "model2.ckpt";
  nlohmann::json header2 = ckpt.header;
  header2.erase("param_count");
  save_checkpoint(ckpt.params, header2, p2);
  std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("checkpoint corruption is rejected with diagnostics") {
  TempDir dir;
  const fs::path p = dir.path / "model.ckpt";
  VecX params = VecX::LinSpaced(10, 0.0, 9.0);
  save_checkpoint(params, nlohmann::json::object(), p);

  // bad magic
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(p)),
                       doctest::Contains("magic"), std::runtime_error);

  // version mismatch
  save_checkpoint(params, nlohmann::json::object(), p);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v99[4] = {99, 0, 0, 0};
    f.write(v99, 4);
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(p)),
                       doctest::Contains("version"), std::runtime_error);

  // payload one float short
  save_checkpoint(params, nlohmann::json::object(), p);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 4);
  try {
    static_cast<void>(load_checkpoint(p));
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("10") != std::string::npos); // expected count
    CHECK(msg.find("9") != std::string::npos);  // actual count
  }

  // trailing garbage
  save_checkpoint(params, nlohmann::json::object(), p);
  {
    std::ofstream f(p, std::ios::app | std::ios::binary);
    f.write("zzzz", 4);
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(p)),
                       doctest::Contains("longer"), std::runtime_error);
}
