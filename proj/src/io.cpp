#include "p2pb/io.hpp"

#include "p2pb/binary.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace p2pb {

namespace {

[[noreturn]] void fail(const std::string& what, const std::filesystem::path& path) {
  throw std::runtime_error(what + ": " + path.string());
}

enum class PlyType { Float32, Float64, Uint8, Int8, Uint16, Int16, Uint32, Int32 };

PlyType parse_ply_type(const std::string& token, const std::filesystem::path& path) {
  if (token == "float" || token == "float32") return PlyType::Float32;
  if (token == "double" || token == "float64") return PlyType::Float64;
  if (token == "uchar" || token == "uint8") return PlyType::Uint8;
  if (token == "char" || token == "int8") return PlyType::Int8;
  if (token == "ushort" || token == "uint16") return PlyType::Uint16;
  if (token == "short" || token == "int16") return PlyType::Int16;
  if (token == "uint" || token == "uint32") return PlyType::Uint32;
  if (token == "int" || token == "int32") return PlyType::Int32;
  fail("read_ply: unsupported property type '" + token + "'", path);
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    case PlyType::Uint8:
    case PlyType::Int8: return 1;
    case PlyType::Uint16:
    case PlyType::Int16: return 2;
    case PlyType::Uint32:
    case PlyType::Int32: return 4;
  }
  return 0;
}

double read_binary_value(std::istream& is, PlyType t, bool& ok) {
  ok = true;
  switch (t) {
    case PlyType::Float32: {
      float v = 0;
      ok = read_f32_le(is, v);
      return v;
    }
    case PlyType::Float64: {
      double v = 0;
      ok = read_f64_le(is, v);
      return v;
    }
    case PlyType::Uint8: {
      unsigned char b = 0;
      ok = static_cast<bool>(is.read(reinterpret_cast<char*>(&b), 1));
      return b;
    }
    case PlyType::Int8: {
      signed char b = 0;
      ok = static_cast<bool>(is.read(reinterpret_cast<char*>(&b), 1));
      return b;
    }
    case PlyType::Uint16:
    case PlyType::Int16: {
      unsigned char b[2];
      ok = static_cast<bool>(is.read(reinterpret_cast<char*>(b), 2));
      const std::uint16_t u = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
      return t == PlyType::Uint16 ? static_cast<double>(u)
                                  : static_cast<double>(static_cast<std::int16_t>(u));
    }
    case PlyType::Uint32:
    case PlyType::Int32: {
      std::uint32_t u = 0;
      ok = read_u32_le(is, u);
      return t == PlyType::Uint32 ? static_cast<double>(u)
                                  : static_cast<double>(static_cast<std::int32_t>(u));
    }
  }
  ok = false;
  return 0.0;
}

double parse_double_token(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail("non-numeric token '" + tok + "'", path);
  }
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::Uint8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

} // namespace

PlyFile read_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("read_ply: cannot open", path);

  std::string line;
  if (!std::getline(is, line)) fail("read_ply: empty file", path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") fail("read_ply: missing 'ply' magic", path);

  bool binary = false;
  bool format_seen = false;
  std::vector<PlyElement> elements;

  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt == "binary_big_endian") {
        fail("read_ply: big-endian files are not supported", path);
      } else {
        fail("read_ply: unknown format '" + fmt + "'", path);
      }
      format_seen = true;
    } else if (keyword == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      if (ls.fail()) fail("read_ply: malformed element line", path);
      elements.push_back(el);
    } else if (keyword == "property") {
      if (elements.empty()) fail("read_ply: property before element", path);
      std::string type_tok;
      ls >> type_tok;
      PlyProperty prop;
      if (type_tok == "list") {
        std::string count_tok, item_tok;
        ls >> count_tok >> item_tok >> prop.name;
        if (ls.fail()) fail("read_ply: malformed list property", path);
        prop.is_list = true;
        prop.count_type = parse_ply_type(count_tok, path);
        prop.type = parse_ply_type(item_tok, path);
      } else {
        ls >> prop.name;
        if (ls.fail()) fail("read_ply: malformed property line", path);
        prop.type = parse_ply_type(type_tok, path);
      }
      elements.back().properties.push_back(prop);
    } else if (keyword == "end_header") {
      break;
    } else {
      fail("read_ply: unknown header keyword '" + keyword + "'", path);
    }
  }
  if (!format_seen) fail("read_ply: header has no format line", path);

  PlyFile out;
  bool have_vertices = false;

  for (const PlyElement& el : elements) {
    if (el.name == "vertex") {
      have_vertices = true;
      int ix = -1, iy = -1, iz = -1;
      int ir = -1, ig = -1, ib = -1;
      std::vector<std::pair<int, int>> feature_props; // (f_k index k, property slot)
      for (int p = 0; p < static_cast<int>(el.properties.size()); ++p) {
        const PlyProperty& prop = el.properties[static_cast<std::size_t>(p)];
        if (prop.is_list) fail("read_ply: list property on vertex element", path);
        if (prop.name == "x") ix = p;
        else if (prop.name == "y") iy = p;
        else if (prop.name == "z") iz = p;
        else if (prop.name == "red") ir = p;
        else if (prop.name == "green") ig = p;
        else if (prop.name == "blue") ib = p;
        else if (prop.name.rfind("f_", 0) == 0) {
          feature_props.emplace_back(std::stoi(prop.name.substr(2)), p);
        }
        // other scalar properties are read and dropped
      }
      if (ix < 0 || iy < 0 || iz < 0) {
        fail("read_ply: vertex element lacks x/y/z properties", path);
      }
      const bool has_rgb = ir >= 0 && ig >= 0 && ib >= 0;
      std::sort(feature_props.begin(), feature_props.end());
      const Eigen::Index width =
          (has_rgb ? 3 : 0) + static_cast<Eigen::Index>(feature_props.size());

      out.cloud.coords.resize(static_cast<Eigen::Index>(el.count), 3);
      out.cloud.features.resize(static_cast<Eigen::Index>(el.count), width);

      std::vector<double> row(el.properties.size(), 0.0);
      for (std::size_t v = 0; v < el.count; ++v) {
        if (binary) {
          for (std::size_t p = 0; p < el.properties.size(); ++p) {
            bool ok = false;
            row[p] = read_binary_value(is, el.properties[p].type, ok);
            if (!ok) fail("read_ply: truncated vertex data", path);
          }
        } else {
          for (std::size_t p = 0; p < el.properties.size(); ++p) {
            std::string tok;
            if (!(is >> tok)) fail("read_ply: truncated vertex data", path);
            row[p] = parse_double_token(tok, path);
          }
        }
        out.cloud.coords(static_cast<Eigen::Index>(v), 0) = row[static_cast<std::size_t>(ix)];
        out.cloud.coords(static_cast<Eigen::Index>(v), 1) = row[static_cast<std::size_t>(iy)];
        out.cloud.coords(static_cast<Eigen::Index>(v), 2) = row[static_cast<std::size_t>(iz)];
        Eigen::Index col = 0;
        if (has_rgb) {
          for (const int p : {ir, ig, ib}) {
            double value = row[static_cast<std::size_t>(p)];
            if (el.properties[static_cast<std::size_t>(p)].type == PlyType::Uint8) {
              value /= 255.0;
            }
            out.cloud.features(static_cast<Eigen::Index>(v), col++) = value;
          }
        }
        for (const auto& [k, p] : feature_props) {
          out.cloud.features(static_cast<Eigen::Index>(v), col++) =
              row[static_cast<std::size_t>(p)];
        }
      }
    } else if (el.name == "face") {
      if (el.properties.size() != 1 || !el.properties[0].is_list ||
          (el.properties[0].name != "vertex_indices" &&
           el.properties[0].name != "vertex_index")) {
        fail("read_ply: face element must be a single vertex_indices list", path);
      }
      std::vector<std::array<int, 3>> tris;
      tris.reserve(el.count);
      for (std::size_t f = 0; f < el.count; ++f) {
        std::size_t count = 0;
        std::vector<int> poly;
        if (binary) {
          bool ok = false;
          count = static_cast<std::size_t>(
              read_binary_value(is, el.properties[0].count_type, ok));
          if (!ok) fail("read_ply: truncated face data", path);
          poly.resize(count);
          for (std::size_t j = 0; j < count; ++j) {
            poly[j] = static_cast<int>(read_binary_value(is, el.properties[0].type, ok));
            if (!ok) fail("read_ply: truncated face data", path);
          }
        } else {
          std::string tok;
          if (!(is >> tok)) fail("read_ply: truncated face data", path);
          count = static_cast<std::size_t>(parse_double_token(tok, path));
          poly.resize(count);
          for (std::size_t j = 0; j < count; ++j) {
            if (!(is >> tok)) fail("read_ply: truncated face data", path);
            poly[j] = static_cast<int>(parse_double_token(tok, path));
          }
        }
        if (count < 3) fail("read_ply: face with fewer than 3 vertices", path);
        for (std::size_t j = 1; j + 1 < count; ++j) {
          tris.push_back({poly[0], poly[j], poly[j + 1]});
        }
      }
      out.mesh.emplace();
      out.mesh->faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
      for (Eigen::Index t = 0; t < out.mesh->faces.rows(); ++t) {
        for (int j = 0; j < 3; ++j) {
          out.mesh->faces(t, j) = tris[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
        }
      }
    } else {
      fail("read_ply: unsupported element '" + el.name + "'", path);
    }
  }

  if (!have_vertices) fail("read_ply: no vertex element", path);
  if (out.mesh.has_value()) {
    out.mesh->vertices = out.cloud.coords;
    const Eigen::Index v = out.mesh->vertices.rows();
    for (Eigen::Index f = 0; f < out.mesh->faces.rows(); ++f) {
      for (int j = 0; j < 3; ++j) {
        const int idx = out.mesh->faces(f, j);
        if (idx < 0 || idx >= v) fail("read_ply: face index out of range", path);
      }
    }
  }
  return out;
}

PointCloud read_ply_cloud(const std::filesystem::path& path) {
  return read_ply(path).cloud;
}

TriangleMesh read_ply_mesh(const std::filesystem::path& path) {
  PlyFile f = read_ply(path);
  if (!f.mesh.has_value()) fail("read_ply_mesh: file has no faces", path);
  return std::move(*f.mesh);
}

namespace {

void write_ply_impl(const MatX3& coords, const MatXX& features, const FacesX3* faces,
                    const std::filesystem::path& path, bool binary, bool color) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("write_ply: cannot open", path);

  const Eigen::Index n = coords.rows();
  const Eigen::Index width = features.cols();
  const bool rgb = color && width >= 3;

  os << "ply\n";
  os << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  os << "element vertex " << n << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  if (rgb) {
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  const Eigen::Index extra_begin = rgb ? 3 : 0;
  for (Eigen::Index f = extra_begin; f < width; ++f) {
    os << "property double f_" << (f - extra_begin) << "\n";
  }
  if (faces != nullptr) {
    os << "element face " << faces->rows() << "\n";
    os << "property list uchar int vertex_indices\n";
  }
  os << "end_header\n";

  auto to_byte = [](double v) {
    return static_cast<unsigned char>(
        std::clamp(std::lround(v * 255.0), 0l, 255l));
  };

  char buf[64];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (binary) {
      write_f64_le(os, coords(i, 0));
      write_f64_le(os, coords(i, 1));
      write_f64_le(os, coords(i, 2));
      if (rgb) {
        for (int c = 0; c < 3; ++c) {
          const unsigned char b = to_byte(features(i, c));
          os.write(reinterpret_cast<const char*>(&b), 1);
        }
      }
      for (Eigen::Index f = extra_begin; f < width; ++f) {
        write_f64_le(os, features(i, f));
      }
    } else {
      for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof(buf), c == 0 ? "%.17g" : " %.17g", coords(i, c));
        os << buf;
      }
      if (rgb) {
        for (int c = 0; c < 3; ++c) {
          os << ' ' << static_cast<int>(to_byte(features(i, c)));
        }
      }
      for (Eigen::Index f = extra_begin; f < width; ++f) {
        std::snprintf(buf, sizeof(buf), " %.17g", features(i, f));
        os << buf;
      }
      os << '\n';
    }
  }

  if (faces != nullptr) {
    for (Eigen::Index f = 0; f < faces->rows(); ++f) {
      if (binary) {
        const unsigned char count = 3;
        os.write(reinterpret_cast<const char*>(&count), 1);
        for (int j = 0; j < 3; ++j) {
          write_u32_le(os, static_cast<std::uint32_t>((*faces)(f, j)));
        }
      } else {
        os << "3 " << (*faces)(f, 0) << ' ' << (*faces)(f, 1) << ' ' << (*faces)(f, 2)
           << '\n';
      }
    }
  }
  if (!os) fail("write_ply: write failed", path);
}

} // namespace

void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               bool binary, bool color) {
  write_ply_impl(cloud.coords, cloud.features, nullptr, path, binary, color);
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
               bool binary) {
  const MatXX no_features(mesh.vertices.rows(), 0);
  write_ply_impl(mesh.vertices, no_features, &mesh.faces, path, binary, false);
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail("read_obj: cannot open", path);

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x = 0, y = 0, z = 0;
      ls >> x >> y >> z;
      if (ls.fail()) fail("read_obj: malformed vertex record", path);
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        // "idx", "idx/uv", "idx/uv/n", "idx//n" all start with the vertex index
        const std::size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int idx = 0;
        const auto rc = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (rc.ec != std::errc() || rc.ptr != head.data() + head.size() || idx == 0) {
          fail("read_obj: malformed face index '" + tok + "'", path);
        }
        // OBJ indices are 1-based; negative counts back from the vertices
        // declared so far.
        const int resolved =
            idx > 0 ? idx - 1 : static_cast<int>(vertices.size()) + idx;
        if (resolved < 0 || resolved >= static_cast<int>(vertices.size())) {
          fail("read_obj: face index out of range", path);
        }
        poly.push_back(resolved);
      }
      if (poly.size() < 3) fail("read_obj: face with fewer than 3 vertices", path);
      for (std::size_t j = 1; j + 1 < poly.size(); ++j) {
        tris.push_back({poly[0], poly[j], poly[j + 1]});
      }
    }
    // all other records (vn, vt, usemtl, ...) are ignored
  }

  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    mesh.vertices.row(i) = vertices[static_cast<std::size_t>(i)].transpose();
  }
  mesh.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      mesh.faces(f, j) = tris[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)];
    }
  }
  return mesh;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail("read_xyz: cannot open", path);

  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      row.push_back(parse_double_token(tok, path));
    }
    if (row.empty()) continue; // blank line
    if (row.size() < 3) fail("read_xyz: row with fewer than 3 values", path);
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      fail("read_xyz: inconsistent column count", path);
    }
    rows.push_back(std::move(row));
  }

  PointCloud cloud;
  cloud.coords.resize(static_cast<Eigen::Index>(rows.size()), 3);
  cloud.features.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(width > 3 ? width - 3 : 0));
  for (Eigen::Index i = 0; i < cloud.coords.rows(); ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) cloud.coords(i, c) = row[static_cast<std::size_t>(c)];
    for (Eigen::Index f = 0; f < cloud.features.cols(); ++f) {
      cloud.features(i, f) = row[static_cast<std::size_t>(3 + f)];
    }
  }
  return cloud;
}

void write_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail("write_xyz: cannot open", path);
  char buf[64];
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), c == 0 ? "%.9g" : " %.9g", cloud.coords(i, c));
      os << buf;
    }
    for (Eigen::Index f = 0; f < cloud.feature_width(); ++f) {
      std::snprintf(buf, sizeof(buf), " %.9g", cloud.features(i, f));
      os << buf;
    }
    os << '\n';
  }
  if (!os) fail("write_xyz: write failed", path);
}

void save_checkpoint(const VecX& params, const nlohmann::json& header,
                     const std::filesystem::path& path) {
  nlohmann::json full = header;
  full["param_count"] = params.size();
  const std::string header_str = full.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) fail("save_checkpoint: cannot open", path);
  os.write(kCheckpointMagic, 4);
  write_u32_le(os, kCheckpointVersion);
  write_u32_le(os, static_cast<std::uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    write_f32_le(os, static_cast<float>(params[i]));
  }
  if (!os) fail("save_checkpoint: write failed", path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("load_checkpoint: cannot open", path);

  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    fail("load_checkpoint: bad magic", path);
  }
  std::uint32_t version = 0;
  if (!read_u32_le(is, version)) fail("load_checkpoint: truncated version", path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: version mismatch (file has " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion) + "): " +
                             path.string());
  }
  std::uint32_t header_len = 0;
  if (!read_u32_le(is, header_len)) fail("load_checkpoint: truncated header length", path);
  std::string header_str(header_len, '\0');
  if (!is.read(header_str.data(), header_len)) {
    fail("load_checkpoint: truncated header", path);
  }

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("load_checkpoint: invalid header JSON (") + e.what() + ")", path);
  }
  if (!ckpt.header.contains("param_count") ||
      !ckpt.header["param_count"].is_number_integer()) {
    fail("load_checkpoint: header lacks param_count", path);
  }
  const Eigen::Index expected = ckpt.header["param_count"].get<Eigen::Index>();

  ckpt.params.resize(expected);
  for (Eigen::Index i = 0; i < expected; ++i) {
    float v = 0;
    if (!read_f32_le(is, v)) {
      throw std::runtime_error("load_checkpoint: payload too short (expected " +
                               std::to_string(expected) + " values, got " +
                               std::to_string(i) + "): " + path.string());
    }
    ckpt.params[i] = v;
  }
  char extra = 0;
  if (is.read(&extra, 1)) {
    throw std::runtime_error("load_checkpoint: payload longer than the expected " +
                             std::to_string(expected) + " values: " + path.string());
  }
  return ckpt;
}

} // namespace p2pb
