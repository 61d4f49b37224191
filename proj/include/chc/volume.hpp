#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace chc {

using Point3 = Eigen::Vector3d;
using Index3 = std::array<std::int64_t, 3>;

// Lattice shape plus the voxel-index -> world-mm affine. Spacing is derived
// from the affine's column norms and cached.
class VolumeGeometry {
 public:
  VolumeGeometry() = default;

  // Throws DataError if dims < 1 or the 3x3 block is singular.
  VolumeGeometry(std::array<int, 3> dims, const Eigen::Matrix4d& affine);

  // Axis-aligned lattice with voxel (0,0,0) centered at `origin`.
  static VolumeGeometry axis_aligned(std::array<int, 3> dims, const Point3& spacing,
                                     const Point3& origin = Point3::Zero());

  const std::array<int, 3>& dims() const { return dims_; }
  const Point3& spacing() const { return spacing_; }
  const Eigen::Matrix4d& affine() const { return affine_; }

  std::int64_t voxel_count() const {
    return std::int64_t{dims_[0]} * dims_[1] * dims_[2];
  }
  std::int64_t linear_index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i + dims_[0] * (j + dims_[1] * k);
  }
  Index3 lattice_index(std::int64_t linear) const;
  bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }

  Point3 world(const Point3& voxel) const;
  Point3 world(std::int64_t linear) const;
  // Continuous voxel coordinates of a world point.
  Point3 voxel(const Point3& world) const;

  bool operator==(const VolumeGeometry& other) const;

 private:
  std::array<int, 3> dims_{1, 1, 1};
  Point3 spacing_ = Point3::Ones();
  Eigen::Matrix4d affine_ = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d inverse_ = Eigen::Matrix4d::Identity();
};

// Scalar volume, x fastest.
struct VoxelGrid {
  VolumeGeometry geometry;
  std::vector<double> data;

  VoxelGrid() = default;
  VoxelGrid(VolumeGeometry g, std::vector<double> values);
  explicit VoxelGrid(VolumeGeometry g, double fill = 0.0);

  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[static_cast<std::size_t>(geometry.linear_index(i, j, k))];
  }
};

struct BinaryMask {
  VolumeGeometry geometry;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  explicit BinaryMask(VolumeGeometry g);
  BinaryMask(VolumeGeometry g, std::vector<std::uint8_t> values);

  bool test(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return geometry.contains(i, j, k) &&
           bits[static_cast<std::size_t>(geometry.linear_index(i, j, k))] != 0;
  }
  void set(std::int64_t i, std::int64_t j, std::int64_t k, bool value = true) {
    bits[static_cast<std::size_t>(geometry.linear_index(i, j, k))] = value ? 1 : 0;
  }
  std::int64_t count() const;
};

BinaryMask threshold_mask(const VoxelGrid& grid, double threshold);

// Keeps voxels whose rounded value is one of `labels` (FreeSurfer ribbon files
// are label volumes, e.g. 3 = left cortex).
BinaryMask select_labels(const VoxelGrid& grid, std::span<const int> labels);

// Nearest-neighbour resampling onto a lattice that shares the source origin and
// axis directions. Output dims are ceil(extent / target_spacing).
BinaryMask resample_mask(const BinaryMask& mask, const Point3& target_spacing);

// Drops voxels without a set face neighbour until nothing changes.
BinaryMask enforce_6connectivity(const BinaryMask& mask);

struct SampleResult {
  std::vector<double> values;
  std::size_t outside = 0;
};

// Trilinear interpolation at world points. Points outside the lattice's
// bounding box sample to 0 and are counted; AlignmentError if more than half
// of the points fall outside.
SampleResult sample_signal(const VoxelGrid& grid, std::span<const Point3> points);

// Samples at the centers of `voxels` (linear indices into `geometry`).
SampleResult sample_signal(const VoxelGrid& grid, const VolumeGeometry& geometry,
                           std::span<const std::int64_t> voxels);

// NIfTI-1 (.nii / .nii.gz / .hdr+.img). 3-D files give one grid, 4-D files one
// grid per frame.
std::vector<VoxelGrid> load_nifti(const std::string& path);

// Repetition time in seconds from pixdim[4], 0 if the file does not set one.
double nifti_repetition_time(const std::string& path);

enum class NiftiType { uint8, float32 };

// Writes a 3-D or 4-D (frames share one geometry) single-file NIfTI-1 with a
// sform; gzip if the path ends in ".gz". `description` goes to the 80-byte
// descrip field.
void write_nifti(const std::string& path, std::span<const VoxelGrid> frames,
                 NiftiType type = NiftiType::float32, double repetition_time = 0.0,
                 const std::string& description = {});
void write_nifti(const std::string& path, const BinaryMask& mask, const std::string& description = {});

// "VOXG1" container for pipeline intermediates, see README for the layout.
void write_voxg(const std::string& path, const VoxelGrid& grid, const std::string& meta = {});
void write_voxg(const std::string& path, const BinaryMask& mask, const std::string& meta = {});
VoxelGrid read_voxg_grid(const std::string& path);
BinaryMask read_voxg_mask(const std::string& path);

// Reads a mask from NIfTI or VOXG1, thresholding scalar volumes at 0.5.
BinaryMask load_mask(const std::string& path);

}  // namespace chc
