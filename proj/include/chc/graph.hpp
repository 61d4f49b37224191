#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "chc/surface.hpp"
#include "chc/volume.hpp"

namespace chc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Binary symmetric adjacency in compressed rows; columns sorted per row.
struct SparseAdjacency {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<std::int32_t> cols;

  static SparseAdjacency from_edges(std::int64_t n, std::span<const std::pair<std::int32_t, std::int32_t>> edges);

  std::int64_t degree(std::int64_t v) const { return row_ptr[v + 1] - row_ptr[v]; }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(cols.size()) / 2; }
  std::span<const std::int32_t> neighbors(std::int64_t v) const {
    return {cols.data() + row_ptr[v], static_cast<std::size_t>(degree(v))};
  }
  bool operator==(const SparseAdjacency&) const = default;
};

// Cycle C_n; used for analytic spectrum checks.
SparseAdjacency cycle_adjacency(std::int64_t n);

// One vertex per mask voxel, vertices ordered by ascending linear voxel index.
struct VoxelGraph {
  VolumeGeometry geometry;
  std::vector<std::int64_t> vertex_to_voxel;
  SparseAdjacency adjacency;

  std::int64_t size() const { return adjacency.n; }
  Point3 world(std::int64_t vertex) const { return geometry.world(vertex_to_voxel[vertex]); }
  // -1 for voxels that are not vertices.
  std::int64_t vertex_of(std::int64_t voxel) const;
};

// 26-neighbourhood graph on the set voxels. DataError on an empty mask or an
// isolated voxel (the mask must already be 6-connectivity cleaned).
VoxelGraph build_graph(const BinaryMask& mask);

struct PrunedEdge {
  std::int64_t voxel_a = 0;  // smaller linear index
  std::int64_t voxel_b = 0;
};

struct PruneReport {
  std::int64_t edges_before = 0;
  std::int64_t edges_removed = 0;
  std::int64_t vertices_removed = 0;
  std::int64_t components_before = 0;
  std::int64_t components_after = 0;
  std::vector<PrunedEdge> removed;
};

struct PruneResult {
  VoxelGraph graph;
  PruneReport report;
};

// Removes every edge whose voxel-center segment crosses the surface, then the
// vertices left without edges.
PruneResult prune_graph(const VoxelGraph& graph, const MeshIndex& index);

struct Components {
  std::vector<std::int32_t> labels;  // label 0 is the largest component
  std::vector<std::int64_t> sizes;   // descending; ties by smallest vertex
};

Components connected_components(const SparseAdjacency& adjacency);
inline Components connected_components(const VoxelGraph& g) { return connected_components(g.adjacency); }

// Subgraph induced by the vertices with keep[v] != 0; ordering is preserved.
VoxelGraph induced_subgraph(const VoxelGraph& graph, std::span<const std::uint8_t> keep);

// Induced subgraph on the largest component, ties going to the component with
// the smallest voxel index. DataError on an empty graph.
VoxelGraph largest_component(const VoxelGraph& graph);

// L = I - D^{-1/2} A D^{-1/2} as a matrix-free operator over its own copy of
// the adjacency.
class LaplacianOperator {
 public:
  // DataError if any vertex has degree 0.
  explicit LaplacianOperator(SparseAdjacency adjacency);

  std::int64_t size() const { return adj_.n; }
  const SparseAdjacency& adjacency() const { return adj_; }
  const std::vector<double>& degrees() const { return degree_; }

  void apply(std::span<const double> x, std::span<double> y) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  // Y = L X for an N x k row-major block.
  void apply(const RowMatrix& x, RowMatrix& y) const;

  // Unit vector along D^{1/2} 1, the null vector of a connected graph.
  Eigen::VectorXd null_vector() const;

  std::vector<Eigen::Triplet<double>> triplets() const;
  Eigen::SparseMatrix<double> sparse() const;
  Eigen::MatrixXd dense() const;

 private:
  SparseAdjacency adj_;
  std::vector<double> degree_;
  std::vector<double> inv_sqrt_degree_;
};

inline LaplacianOperator laplacian(const VoxelGraph& g) { return LaplacianOperator(g.adjacency); }

// "CHCG1" container; see README for the layout.
void write_graph(const std::string& path, const VoxelGraph& graph, const std::string& meta = {});
VoxelGraph read_graph(const std::string& path, std::string* meta = nullptr);

// horizontal (x only), vertical (y or z only) or diagonal (two or more axes).
std::string connection_type(std::int64_t di, std::int64_t dj, std::int64_t dk);

void write_pruned_edges_csv(const std::string& path, const VolumeGeometry& geometry,
                            const PruneReport& report, const std::string& header_comment = {});

}  // namespace chc
