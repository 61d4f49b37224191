#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chc/volume.hpp"

namespace chc {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::int32_t, 3>> triangles;

  // Validates indices and coordinates (DataError), then drops triangles with
  // area <= 1e-12 mm^2. Returns the number dropped.
  std::size_t clean();

  void translate(const Point3& offset);
};

struct LoadedSurface {
  TriangleMesh mesh;
  std::size_t degenerate_dropped = 0;
};

// FreeSurfer binary triangle surface (magic FF FF FE) or ASCII OFF, by content.
// A FreeSurfer "cras" volume-info entry is added to the coordinates so the
// mesh lands in scanner space.
LoadedSurface load_surface(const std::string& path);

// `created_by` replaces the default creator line (no newlines allowed).
void write_freesurfer_surface(const std::string& path, const TriangleMesh& mesh, const std::string& created_by = {});
void write_off(const std::string& path, const TriangleMesh& mesh);

// Segment/triangle crossing with the segment parameter restricted to
// (eps, 1 - eps) and barycentric bounds relaxed by eps. The endpoints are put
// in a canonical order first, so the test is symmetric in p and q.
bool segment_hits_triangle(const Point3& p, const Point3& q, const Point3& a, const Point3& b,
                           const Point3& c);

inline constexpr double kSegmentEpsilon = 1e-9;

// Uniform grid over the mesh bounding box. Each triangle is listed in every
// cell its (slightly padded) bounding box overlaps, so a query only has to
// visit the cells covered by the segment's bounding box.
class MeshIndex {
 public:
  // cell_size <= 0 selects twice the mean edge length. DataError on an empty mesh.
  explicit MeshIndex(TriangleMesh mesh, double cell_size = 0.0);

  bool segment_intersects(const Point3& p, const Point3& q) const;

  const TriangleMesh& mesh() const { return mesh_; }
  double cell_size() const { return cell_; }
  std::array<std::int64_t, 3> cells() const { return {n_[0], n_[1], n_[2]}; }

 private:
  std::array<std::int64_t, 3> cell_of(const Point3& p) const;

  TriangleMesh mesh_;
  double cell_ = 1.0;
  Point3 origin_ = Point3::Zero();
  std::array<std::int64_t, 3> n_{1, 1, 1};
  std::vector<std::uint32_t> start_;  // CSR over cells
  std::vector<std::int32_t> items_;
  Point3 lo_, hi_;
};

inline MeshIndex build_index(TriangleMesh mesh) { return MeshIndex(std::move(mesh)); }

// Reference query: tests every triangle.
bool segment_intersects_brute(const TriangleMesh& mesh, const Point3& p, const Point3& q);

}  // namespace chc
