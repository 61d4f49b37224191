#include "chc/volume.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "chc/error.hpp"

namespace chc {

VolumeGeometry::VolumeGeometry(std::array<int, 3> dims, const Eigen::Matrix4d& affine)
    : dims_(dims), affine_(affine) {
  for (int d : dims_) {
    if (d < 1) throw DataError("volume dims must be >= 1");
  }
  const Eigen::Matrix3d linear = affine_.topLeftCorner<3, 3>();
  if (!affine_.allFinite()) throw DataError("affine has non-finite entries");
  const double scale = linear.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || std::abs(linear.determinant()) <= 1e-12 * scale * scale * scale) {
    throw DataError("affine 3x3 block is singular");
  }
  for (int c = 0; c < 3; ++c) spacing_[c] = linear.col(c).norm();
  affine_.row(3) << 0.0, 0.0, 0.0, 1.0;
  inverse_ = affine_.inverse();
}

VolumeGeometry VolumeGeometry::axis_aligned(std::array<int, 3> dims, const Point3& spacing,
                                            const Point3& origin) {
  for (int c = 0; c < 3; ++c) {
    if (!(spacing[c] > 0.0)) throw DataError("voxel spacing must be > 0");
  }
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  affine.diagonal().head<3>() = spacing;
  affine.topRightCorner<3, 1>() = origin;
  return VolumeGeometry(dims, affine);
}

Index3 VolumeGeometry::lattice_index(std::int64_t linear) const {
  const std::int64_t nx = dims_[0];
  const std::int64_t nxy = nx * dims_[1];
  return {linear % nx, (linear % nxy) / nx, linear / nxy};
}

Point3 VolumeGeometry::world(const Point3& voxel) const {
  return affine_.topLeftCorner<3, 3>() * voxel + affine_.topRightCorner<3, 1>();
}

Point3 VolumeGeometry::world(std::int64_t linear) const {
  const Index3 ijk = lattice_index(linear);
  return world(Point3(double(ijk[0]), double(ijk[1]), double(ijk[2])));
}

Point3 VolumeGeometry::voxel(const Point3& world) const {
  return inverse_.topLeftCorner<3, 3>() * world + inverse_.topRightCorner<3, 1>();
}

bool VolumeGeometry::operator==(const VolumeGeometry& other) const {
  return dims_ == other.dims_ && affine_ == other.affine_;
}

VoxelGrid::VoxelGrid(VolumeGeometry g, std::vector<double> values)
    : geometry(std::move(g)), data(std::move(values)) {
  if (static_cast<std::int64_t>(data.size()) != geometry.voxel_count()) {
    throw DataError("grid payload length does not match dims");
  }
  const auto bad = std::count_if(data.begin(), data.end(), [](double v) { return !std::isfinite(v); });
  if (bad > 0) throw DataError("grid has " + std::to_string(bad) + " non-finite values");
}

VoxelGrid::VoxelGrid(VolumeGeometry g, double fill)
    : geometry(std::move(g)), data(static_cast<std::size_t>(geometry.voxel_count()), fill) {}

BinaryMask::BinaryMask(VolumeGeometry g)
    : geometry(std::move(g)), bits(static_cast<std::size_t>(geometry.voxel_count()), 0) {}

BinaryMask::BinaryMask(VolumeGeometry g, std::vector<std::uint8_t> values)
    : geometry(std::move(g)), bits(std::move(values)) {
  if (static_cast<std::int64_t>(bits.size()) != geometry.voxel_count()) {
    throw DataError("mask payload length does not match dims");
  }
  for (auto& b : bits) b = b ? 1 : 0;
}

std::int64_t BinaryMask::count() const {
  return std::count(bits.begin(), bits.end(), std::uint8_t{1});
}

BinaryMask threshold_mask(const VoxelGrid& grid, double threshold) {
  if (!std::isfinite(threshold)) throw ArgumentError("threshold must be finite");
  BinaryMask mask(grid.geometry);
  for (std::size_t v = 0; v < grid.data.size(); ++v) mask.bits[v] = grid.data[v] >= threshold;
  return mask;
}

BinaryMask select_labels(const VoxelGrid& grid, std::span<const int> labels) {
  BinaryMask mask(grid.geometry);
  for (std::size_t v = 0; v < grid.data.size(); ++v) {
    const double rounded = std::nearbyint(grid.data[v]);
    mask.bits[v] = std::any_of(labels.begin(), labels.end(),
                               [&](int label) { return rounded == double(label); });
  }
  return mask;
}

BinaryMask resample_mask(const BinaryMask& mask, const Point3& target_spacing) {
  const auto& src = mask.geometry;
  for (int c = 0; c < 3; ++c) {
    if (!(target_spacing[c] > 0.0)) throw ArgumentError("target spacing must be > 0");
  }
  std::array<int, 3> dims{};
  Eigen::Matrix4d affine = src.affine();
  Point3 step;  // output voxel step measured in source voxels
  for (int c = 0; c < 3; ++c) {
    const double extent = src.dims()[c] * src.spacing()[c];
    // Guard the ceil against round-off when extent is an exact multiple.
    const double ratio = extent / target_spacing[c];
    dims[c] = std::max(1, static_cast<int>(std::ceil(ratio - 1e-9)));
    step[c] = target_spacing[c] / src.spacing()[c];
    affine.col(c).head<3>() *= step[c];
  }
  BinaryMask out(VolumeGeometry(dims, affine));
  const auto& sd = src.dims();
  for (int k = 0; k < dims[2]; ++k) {
    const std::int64_t sk = static_cast<std::int64_t>(std::floor(k * step[2] + 0.5));
    if (sk >= sd[2]) continue;
    for (int j = 0; j < dims[1]; ++j) {
      const std::int64_t sj = static_cast<std::int64_t>(std::floor(j * step[1] + 0.5));
      if (sj >= sd[1]) continue;
      for (int i = 0; i < dims[0]; ++i) {
        const std::int64_t si = static_cast<std::int64_t>(std::floor(i * step[0] + 0.5));
        if (si >= sd[0]) continue;
        if (mask.test(si, sj, sk)) out.set(i, j, k);
      }
    }
  }
  return out;
}

namespace {

constexpr std::array<std::array<int, 3>, 6> kFaceOffsets{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};

bool has_face_neighbor(const BinaryMask& mask, std::int64_t i, std::int64_t j, std::int64_t k) {
  for (const auto& o : kFaceOffsets) {
    if (mask.test(i + o[0], j + o[1], k + o[2])) return true;
  }
  return false;
}

}  // namespace

BinaryMask enforce_6connectivity(const BinaryMask& mask) {
  BinaryMask current = mask;
  const auto& d = current.geometry.dims();
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::int64_t> drop;
    for (std::int64_t k = 0; k < d[2]; ++k) {
      for (std::int64_t j = 0; j < d[1]; ++j) {
        for (std::int64_t i = 0; i < d[0]; ++i) {
          if (current.test(i, j, k) && !has_face_neighbor(current, i, j, k)) {
            drop.push_back(current.geometry.linear_index(i, j, k));
          }
        }
      }
    }
    for (auto v : drop) current.bits[static_cast<std::size_t>(v)] = 0;
    changed = !drop.empty();
  }
  return current;
}

namespace {

constexpr double kLatticeSlack = 1e-9;

// Returns false if `p` (continuous voxel coordinates) lies outside the box
// spanned by the voxel centers.
bool trilinear(const VoxelGrid& grid, const Point3& p, double& value) {
  const auto& d = grid.geometry.dims();
  std::array<std::int64_t, 3> base{};
  std::array<double, 3> frac{};
  for (int c = 0; c < 3; ++c) {
    const double x = p[c];
    if (!(x >= -kLatticeSlack && x <= d[c] - 1 + kLatticeSlack)) return false;
    const double clamped = std::clamp(x, 0.0, double(d[c] - 1));
    auto b = static_cast<std::int64_t>(std::floor(clamped));
    if (b >= d[c] - 1) b = std::max<std::int64_t>(0, d[c] - 2);
    base[c] = b;
    frac[c] = d[c] == 1 ? 0.0 : clamped - double(b);
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    std::array<std::int64_t, 3> idx{};
    double w = 1.0;
    for (int c = 0; c < 3; ++c) {
      const int bit = (corner >> c) & 1;
      w *= bit ? frac[c] : 1.0 - frac[c];
      idx[c] = std::min<std::int64_t>(base[c] + bit, d[c] - 1);
    }
    if (w != 0.0) acc += w * grid.at(idx[0], idx[1], idx[2]);
  }
  value = acc;
  return true;
}

void check_alignment(const SampleResult& result) {
  if (!result.values.empty() && 2 * result.outside > result.values.size()) {
    throw AlignmentError(std::to_string(result.outside) + " of " +
                         std::to_string(result.values.size()) +
                         " sample points fall outside the functional volume");
  }
}

}  // namespace

SampleResult sample_signal(const VoxelGrid& grid, std::span<const Point3> points) {
  SampleResult result;
  result.values.resize(points.size(), 0.0);
  for (std::size_t n = 0; n < points.size(); ++n) {
    double v = 0.0;
    if (trilinear(grid, grid.geometry.voxel(points[n]), v)) {
      result.values[n] = v;
    } else {
      ++result.outside;
    }
  }
  check_alignment(result);
  return result;
}

SampleResult sample_signal(const VoxelGrid& grid, const VolumeGeometry& geometry,
                           std::span<const std::int64_t> voxels) {
  std::vector<Point3> points;
  points.reserve(voxels.size());
  for (auto v : voxels) points.push_back(geometry.world(v));
  return sample_signal(grid, points);
}

}  // namespace chc
