#include "chc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binio.hpp"
#include "chc/error.hpp"

namespace chc {

SparseAdjacency SparseAdjacency::from_edges(std::int64_t n,
                                            std::span<const std::pair<std::int32_t, std::int32_t>> edges) {
  std::vector<std::vector<std::int32_t>> rows(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw DataError("edge endpoint out of range");
    if (a == b) throw DataError("self-loops are not allowed");
    rows[a].push_back(b);
    rows[b].push_back(a);
  }
  SparseAdjacency adj;
  adj.n = n;
  adj.row_ptr.assign(1, 0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    adj.cols.insert(adj.cols.end(), row.begin(), row.end());
    adj.row_ptr.push_back(static_cast<std::int64_t>(adj.cols.size()));
  }
  return adj;
}

SparseAdjacency cycle_adjacency(std::int64_t n) {
  if (n < 3) throw ArgumentError("a cycle needs at least 3 vertices");
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::int64_t i = 0; i < n; ++i) {
    edges.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>((i + 1) % n));
  }
  return SparseAdjacency::from_edges(n, edges);
}

std::int64_t VoxelGraph::vertex_of(std::int64_t voxel) const {
  const auto it = std::lower_bound(vertex_to_voxel.begin(), vertex_to_voxel.end(), voxel);
  if (it == vertex_to_voxel.end() || *it != voxel) return -1;
  return it - vertex_to_voxel.begin();
}

VoxelGraph build_graph(const BinaryMask& mask) {
  VoxelGraph g;
  g.geometry = mask.geometry;
  const auto total = mask.geometry.voxel_count();
  std::vector<std::int32_t> vertex(static_cast<std::size_t>(total), -1);
  for (std::int64_t v = 0; v < total; ++v) {
    if (mask.bits[static_cast<std::size_t>(v)]) {
      vertex[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(g.vertex_to_voxel.size());
      g.vertex_to_voxel.push_back(v);
    }
  }
  if (g.vertex_to_voxel.empty()) throw DataError("mask is empty");

  auto& adj = g.adjacency;
  adj.n = static_cast<std::int64_t>(g.vertex_to_voxel.size());
  adj.row_ptr.assign(1, 0);
  adj.cols.reserve(static_cast<std::size_t>(adj.n) * 14);
  const auto& geom = mask.geometry;
  for (std::int64_t n = 0; n < adj.n; ++n) {
    const auto [i, j, k] = geom.lattice_index(g.vertex_to_voxel[n]);
    // Offsets visited in ascending linear order, so each row comes out sorted.
    for (int dk = -1; dk <= 1; ++dk) {
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          if (!geom.contains(i + di, j + dj, k + dk)) continue;
          const auto m = vertex[static_cast<std::size_t>(geom.linear_index(i + di, j + dj, k + dk))];
          if (m >= 0) adj.cols.push_back(m);
        }
      }
    }
    adj.row_ptr.push_back(static_cast<std::int64_t>(adj.cols.size()));
    if (adj.degree(n) == 0) {
      throw DataError("voxel " + std::to_string(g.vertex_to_voxel[n]) +
                      " has no 26-neighbour; clean the mask first");
    }
  }
  return g;
}

VoxelGraph induced_subgraph(const VoxelGraph& graph, std::span<const std::uint8_t> keep) {
  const auto n = graph.size();
  std::vector<std::int32_t> remap(static_cast<std::size_t>(n), -1);
  VoxelGraph out;
  out.geometry = graph.geometry;
  for (std::int64_t v = 0; v < n; ++v) {
    if (keep[v]) {
      remap[v] = static_cast<std::int32_t>(out.vertex_to_voxel.size());
      out.vertex_to_voxel.push_back(graph.vertex_to_voxel[v]);
    }
  }
  auto& adj = out.adjacency;
  adj.n = static_cast<std::int64_t>(out.vertex_to_voxel.size());
  adj.row_ptr.assign(1, 0);
  for (std::int64_t v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    for (auto w : graph.adjacency.neighbors(v)) {
      if (remap[w] >= 0) adj.cols.push_back(remap[w]);
    }
    adj.row_ptr.push_back(static_cast<std::int64_t>(adj.cols.size()));
  }
  return out;
}

Components connected_components(const SparseAdjacency& adjacency) {
  const auto n = adjacency.n;
  std::vector<std::int32_t> raw(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> sizes;
  std::vector<std::int32_t> stack;
  for (std::int64_t s = 0; s < n; ++s) {
    if (raw[s] >= 0) continue;
    const auto label = static_cast<std::int32_t>(sizes.size());
    std::int64_t size = 0;
    raw[s] = label;
    stack.push_back(static_cast<std::int32_t>(s));
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      ++size;
      for (auto w : adjacency.neighbors(v)) {
        if (raw[w] < 0) {
          raw[w] = label;
          stack.push_back(w);
        }
      }
    }
    sizes.push_back(size);
  }
  // Raw labels follow the smallest member vertex, so a stable sort by size
  // breaks ties toward the smallest vertex.
  std::vector<std::int32_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sizes[a] > sizes[b]; });
  std::vector<std::int32_t> rank(sizes.size());
  Components out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank[order[r]] = static_cast<std::int32_t>(r);
    out.sizes.push_back(sizes[order[r]]);
  }
  out.labels.resize(raw.size());
  for (std::size_t v = 0; v < raw.size(); ++v) out.labels[v] = rank[raw[v]];
  return out;
}

VoxelGraph largest_component(const VoxelGraph& graph) {
  if (graph.size() == 0) throw DataError("graph is empty");
  const auto comps = connected_components(graph);
  if (comps.sizes.size() == 1) return graph;
  std::vector<std::uint8_t> keep(comps.labels.size());
  for (std::size_t v = 0; v < keep.size(); ++v) keep[v] = comps.labels[v] == 0;
  return induced_subgraph(graph, keep);
}

PruneResult prune_graph(const VoxelGraph& graph, const MeshIndex& index) {
  const auto& adj = graph.adjacency;
  const auto n = graph.size();
  // One flag per CSR entry; only the i < j entry is tested and then mirrored.
  std::vector<std::uint8_t> cut(adj.cols.size(), 0);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < n; ++i) {
    const Point3 p = graph.world(i);
    for (auto e = adj.row_ptr[i]; e < adj.row_ptr[i + 1]; ++e) {
      const auto j = adj.cols[e];
      if (j > i) cut[e] = index.segment_intersects(p, graph.world(j));
    }
  }
  PruneResult result;
  auto& report = result.report;
  report.edges_before = adj.edge_count();
  report.components_before = static_cast<std::int64_t>(connected_components(adj).sizes.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (auto e = adj.row_ptr[i]; e < adj.row_ptr[i + 1]; ++e) {
      const auto j = adj.cols[e];
      if (j <= i || !cut[e]) continue;
      const auto row = adj.neighbors(j);
      const auto mirror = std::lower_bound(row.begin(), row.end(), static_cast<std::int32_t>(i)) - row.begin();
      cut[adj.row_ptr[j] + mirror] = 1;
      report.removed.push_back({graph.vertex_to_voxel[i], graph.vertex_to_voxel[j]});
    }
  }
  report.edges_removed = static_cast<std::int64_t>(report.removed.size());

  VoxelGraph kept;
  kept.geometry = graph.geometry;
  kept.vertex_to_voxel = graph.vertex_to_voxel;
  kept.adjacency.n = n;
  kept.adjacency.row_ptr.assign(1, 0);
  std::vector<std::uint8_t> alive(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (auto e = adj.row_ptr[i]; e < adj.row_ptr[i + 1]; ++e) {
      if (!cut[e]) kept.adjacency.cols.push_back(adj.cols[e]);
    }
    kept.adjacency.row_ptr.push_back(static_cast<std::int64_t>(kept.adjacency.cols.size()));
    alive[i] = kept.adjacency.degree(i) > 0;
  }
  result.graph = induced_subgraph(kept, alive);
  report.vertices_removed = n - result.graph.size();
  report.components_after = static_cast<std::int64_t>(connected_components(result.graph).sizes.size());
  return result;
}

LaplacianOperator::LaplacianOperator(SparseAdjacency adjacency) : adj_(std::move(adjacency)) {
  degree_.resize(static_cast<std::size_t>(adj_.n));
  inv_sqrt_degree_.resize(degree_.size());
  for (std::int64_t v = 0; v < adj_.n; ++v) {
    const auto d = adj_.degree(v);
    if (d == 0) throw DataError("vertex " + std::to_string(v) + " has degree 0");
    degree_[v] = double(d);
    inv_sqrt_degree_[v] = 1.0 / std::sqrt(double(d));
  }
}

void LaplacianOperator::apply(std::span<const double> x, std::span<double> y) const {
  const auto n = adj_.n;
  const double* s = inv_sqrt_degree_.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (auto e = adj_.row_ptr[i]; e < adj_.row_ptr[i + 1]; ++e) {
      const auto j = adj_.cols[e];
      acc += s[j] * x[j];
    }
    y[i] = x[i] - s[i] * acc;
  }
}

Eigen::VectorXd LaplacianOperator::apply(const Eigen::VectorXd& x) const {
  if (x.size() != adj_.n) throw ArgumentError("Laplacian apply: dimension mismatch");
  Eigen::VectorXd y(x.size());
  apply(std::span<const double>(x.data(), x.size()), std::span<double>(y.data(), y.size()));
  return y;
}

void LaplacianOperator::apply(const RowMatrix& x, RowMatrix& y) const {
  const auto n = adj_.n;
  if (x.rows() != n) throw ArgumentError("Laplacian apply: dimension mismatch");
  y.resize(n, x.cols());
  const double* s = inv_sqrt_degree_.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto acc = y.row(i);
    acc.setZero();
    for (auto e = adj_.row_ptr[i]; e < adj_.row_ptr[i + 1]; ++e) {
      const auto j = adj_.cols[e];
      acc.noalias() += s[j] * x.row(j);
    }
    acc = x.row(i) - s[i] * acc;
  }
}

Eigen::VectorXd LaplacianOperator::null_vector() const {
  Eigen::VectorXd v(adj_.n);
  for (std::int64_t i = 0; i < adj_.n; ++i) v[i] = std::sqrt(degree_[i]);
  return v / v.norm();
}

std::vector<Eigen::Triplet<double>> LaplacianOperator::triplets() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(adj_.cols.size() + static_cast<std::size_t>(adj_.n));
  for (std::int64_t i = 0; i < adj_.n; ++i) {
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
    for (auto j : adj_.neighbors(i)) {
      t.emplace_back(static_cast<int>(i), j, -inv_sqrt_degree_[i] * inv_sqrt_degree_[j]);
    }
  }
  return t;
}

Eigen::SparseMatrix<double> LaplacianOperator::sparse() const {
  Eigen::SparseMatrix<double> m(adj_.n, adj_.n);
  const auto t = triplets();
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

Eigen::MatrixXd LaplacianOperator::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(adj_.n, adj_.n);
  for (const auto& t : triplets()) m(t.row(), t.col()) += t.value();
  return m;
}

// CHCG1 layout (little-endian):
//   "CHCG1" | u32 meta length | meta | i32 dims[3] | f64 affine[16] row-major
//   | i64 N | i64 |E| | i64 row_ptr[N+1] | i32 cols[2|E|] | i64 vertex_to_voxel[N]
void write_graph(const std::string& path, const VoxelGraph& graph, const std::string& meta) {
  binio::Writer w(path);
  w.bytes("CHCG1", 5);
  w.string(meta);
  for (int d : graph.geometry.dims()) w.put<std::int32_t>(d);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) w.put<double>(graph.geometry.affine()(r, c));
  }
  w.put<std::int64_t>(graph.size());
  w.put<std::int64_t>(graph.adjacency.edge_count());
  w.array(std::span<const std::int64_t>(graph.adjacency.row_ptr));
  w.array(std::span<const std::int32_t>(graph.adjacency.cols));
  w.array(std::span<const std::int64_t>(graph.vertex_to_voxel));
  w.finish();
}

VoxelGraph read_graph(const std::string& path, std::string* meta) {
  binio::Reader r(path);
  r.expect_magic("CHCG1");
  auto m = r.string();
  if (meta) *meta = std::move(m);
  std::array<int, 3> dims{};
  for (auto& d : dims) d = r.get<std::int32_t>();
  Eigen::Matrix4d affine;
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 4; ++c) affine(i, c) = r.get<double>();
  }
  VoxelGraph g;
  g.geometry = VolumeGeometry(dims, affine);
  const auto n = r.get<std::int64_t>();
  const auto e = r.get<std::int64_t>();
  if (n < 0 || e < 0 || n > g.geometry.voxel_count()) throw FormatError(path + ": bad CHCG1 counts");
  g.adjacency.n = n;
  g.adjacency.row_ptr = r.array<std::int64_t>(static_cast<std::size_t>(n + 1));
  g.adjacency.cols = r.array<std::int32_t>(static_cast<std::size_t>(2 * e));
  g.vertex_to_voxel = r.array<std::int64_t>(static_cast<std::size_t>(n));
  if (g.adjacency.row_ptr.front() != 0 || g.adjacency.row_ptr.back() != 2 * e) {
    throw FormatError(path + ": inconsistent CHCG1 row pointers");
  }
  for (std::int64_t v = 0; v < n; ++v) {
    if (g.adjacency.row_ptr[v] > g.adjacency.row_ptr[v + 1]) throw FormatError(path + ": row pointers decrease");
  }
  for (auto c : g.adjacency.cols) {
    if (c < 0 || c >= n) throw FormatError(path + ": column index out of range");
  }
  return g;
}

std::string connection_type(std::int64_t di, std::int64_t dj, std::int64_t dk) {
  const int axes = (di != 0) + (dj != 0) + (dk != 0);
  if (axes >= 2) return "diagonal";
  return di != 0 ? "horizontal" : "vertical";
}

void write_pruned_edges_csv(const std::string& path, const VolumeGeometry& geometry,
                            const PruneReport& report, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "i_a,j_a,k_a,i_b,j_b,k_b,type\n";
  for (const auto& e : report.removed) {
    const auto a = geometry.lattice_index(e.voxel_a);
    const auto b = geometry.lattice_index(e.voxel_b);
    out << a[0] << ',' << a[1] << ',' << a[2] << ',' << b[0] << ',' << b[1] << ',' << b[2] << ','
        << connection_type(b[0] - a[0], b[1] - a[1], b[2] - a[2]) << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace chc
