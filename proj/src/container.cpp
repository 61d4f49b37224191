// VOXG1 layout (little-endian):
//   "VOXG1" | u8 kind (0 = float64 grid, 1 = u8 mask) | i32 dims[3]
//   | f64 affine[16] row-major | u32 meta length | meta bytes | payload

#include <fstream>

#include "binio.hpp"
#include "chc/error.hpp"
#include "chc/volume.hpp"

namespace chc {

namespace {

enum class Kind : std::uint8_t { grid = 0, mask = 1 };

void write_header(binio::Writer& w, Kind kind, const VolumeGeometry& g, const std::string& meta) {
  w.bytes("VOXG1", 5);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
  for (int d : g.dims()) w.put<std::int32_t>(d);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) w.put<double>(g.affine()(r, c));
  }
  w.string(meta);
}

VolumeGeometry read_header(binio::Reader& r, Kind expected, const std::string& path) {
  r.expect_magic("VOXG1");
  const auto kind = static_cast<Kind>(r.get<std::uint8_t>());
  if (kind != expected) throw FormatError(path + ": VOXG1 payload kind mismatch");
  std::array<int, 3> dims{};
  for (auto& d : dims) d = r.get<std::int32_t>();
  Eigen::Matrix4d affine;
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 4; ++c) affine(i, c) = r.get<double>();
  }
  r.string();
  return VolumeGeometry(dims, affine);
}

}  // namespace

void write_voxg(const std::string& path, const VoxelGrid& grid, const std::string& meta) {
  binio::Writer w(path);
  write_header(w, Kind::grid, grid.geometry, meta);
  w.array(std::span<const double>(grid.data));
  w.finish();
}

void write_voxg(const std::string& path, const BinaryMask& mask, const std::string& meta) {
  binio::Writer w(path);
  write_header(w, Kind::mask, mask.geometry, meta);
  w.array(std::span<const std::uint8_t>(mask.bits));
  w.finish();
}

VoxelGrid read_voxg_grid(const std::string& path) {
  binio::Reader r(path);
  auto g = read_header(r, Kind::grid, path);
  auto data = r.array<double>(static_cast<std::size_t>(g.voxel_count()));
  return VoxelGrid(std::move(g), std::move(data));
}

BinaryMask read_voxg_mask(const std::string& path) {
  binio::Reader r(path);
  auto g = read_header(r, Kind::mask, path);
  auto bits = r.array<std::uint8_t>(static_cast<std::size_t>(g.voxel_count()));
  return BinaryMask(std::move(g), std::move(bits));
}

BinaryMask load_mask(const std::string& path) {
  char magic[5] = {};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    in.read(magic, 5);
  }
  if (std::string(magic, 5) == "VOXG1") {
    binio::Reader r(path);
    r.expect_magic("VOXG1");
    return r.get<std::uint8_t>() == 1 ? read_voxg_mask(path) : threshold_mask(read_voxg_grid(path), 0.5);
  }
  auto frames = load_nifti(path);
  if (frames.size() != 1) throw DataError(path + ": mask must be a single 3-D volume");
  return threshold_mask(frames.front(), 0.5);
}

}  // namespace chc
