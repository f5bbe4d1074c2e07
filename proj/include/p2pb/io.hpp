#pragma once

#include "p2pb/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace p2pb {

/// Parsed PLY contents: vertex data always, faces when the file has them.
struct PlyFile {
  PointCloud cloud;
  std::optional<TriangleMesh> mesh;
};

/// Reads ASCII or binary-little-endian PLY. Properties x/y/z are required;
/// red/green/blue (uchar, scaled to [0,1], or float) and f_0..f_{F-1} float
/// properties become feature columns; face elements yield a mesh.
PlyFile read_ply(const std::filesystem::path& path);

/// read_ply, erroring when the file carries faces / no faces respectively.
PointCloud read_ply_cloud(const std::filesystem::path& path);
TriangleMesh read_ply_mesh(const std::filesystem::path& path);

/// Writes a cloud. Coordinates (and non-color features) are stored as double
/// properties so binary round-trips are bit-exact. With `color` set, the
/// first three feature columns are written as uchar red/green/blue; the rest
/// as f_0, f_1, ...
void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               bool binary, bool color = false);
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
               bool binary);

/// Wavefront OBJ subset: v records and f records (fan-triangulated, with
/// negative relative indices resolved).
TriangleMesh read_obj(const std::filesystem::path& path);

/// Whitespace-separated "x y z [features...]" rows; blank lines skipped.
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

inline constexpr char kCheckpointMagic[4] = {'P', '2', 'P', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container for trained parameters:
///   "P2PB" | u32 version | u32 header length | header JSON (UTF-8) |
///   payload of f32 little-endian values in canonical layout order.
/// The header must carry enough to re-derive the payload length; it is
/// stored redundantly under "param_count" and validated on load.
void save_checkpoint(const VecX& params, const nlohmann::json& header,
                     const std::filesystem::path& path);

struct Checkpoint {
  VecX params; // f32 payload widened to double
  nlohmann::json header;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace p2pb
