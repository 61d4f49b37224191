#include <algorithm>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "test_support.hpp"

#include "chc/error.hpp"
#include "chc/experiment.hpp"
#include "chc/graph.hpp"

using namespace chc;

namespace {

BinaryMask cube(int n) {
  BinaryMask m(VolumeGeometry::axis_aligned({n + 2, n + 2, n + 2}, Point3::Ones()));
  for (int k = 1; k <= n; ++k)
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i) m.set(i, j, k);
  return m;
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("26-neighbourhood graph of a cube") {
  const auto g = build_graph(cube(3));
  REQUIRE(g.size() == 27);
  CHECK(std::is_sorted(g.vertex_to_voxel.begin(), g.vertex_to_voxel.end()));
  std::int64_t edges = 0;
  for (int a = 0; a < 27; ++a) {
    for (int b = a + 1; b < 27; ++b) {
      const int da = std::abs(a % 3 - b % 3), db = std::abs(a / 3 % 3 - b / 3 % 3), dc = std::abs(a / 9 - b / 9);
      edges += std::max({da, db, dc}) == 1;
    }
  }
  CHECK(g.adjacency.edge_count() == edges);
  CHECK(g.adjacency.degree(13) == 26);
  CHECK(g.adjacency.degree(0) == 7);
  for (std::int64_t v = 0; v < g.size(); ++v) {
    for (auto w : g.adjacency.neighbors(v)) {
      const auto back = g.adjacency.neighbors(w);
      CHECK(std::find(back.begin(), back.end(), v) != back.end());
    }
  }
}

TEST_CASE("graph construction rejects empty masks and isolated voxels") {
  BinaryMask m(VolumeGeometry::axis_aligned({4, 4, 4}, Point3::Ones()));
  CHECK_THROWS_AS(build_graph(m), DataError);
  m.set(0, 0, 0);
  m.set(0, 1, 0);
  m.set(3, 3, 3);
  CHECK_THROWS_AS(build_graph(m), DataError);
}

TEST_CASE("pruning on a folded sheet removes exactly the crossing edges") {
  SheetOptions o;
  const auto ph = make_folded_sheet(o);
  const auto g = build_graph(ph.mask);
  const auto r = prune_graph(g, MeshIndex(ph.surface));
  REQUIRE(r.report.removed.size() == ph.expected_removed.size());
  for (std::size_t i = 0; i < ph.expected_removed.size(); ++i) {
    CHECK(r.report.removed[i].voxel_a == ph.expected_removed[i].voxel_a);
    CHECK(r.report.removed[i].voxel_b == ph.expected_removed[i].voxel_b);
  }
  CHECK(r.report.edges_removed == std::int64_t(ph.expected_removed.size()));
  CHECK(r.report.components_before == 1);
  CHECK(r.report.components_after == 2);
  CHECK(r.report.vertices_removed == 0);
  const auto big = largest_component(r.graph);
  CHECK(big.size() == 100);
}

TEST_CASE("pruning drops vertices left without edges") {
  // A one-voxel stub on top of a sheet; a lid between them cuts its edges.
  BinaryMask m(VolumeGeometry::axis_aligned({5, 5, 2}, Point3::Ones()));
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) m.set(i, j, 0);
  m.set(2, 2, 1);
  const auto g = build_graph(m);
  REQUIRE(g.adjacency.degree(g.size() - 1) == 9);
  TriangleMesh lid;
  lid.vertices = {Point3(0.5, 0.5, 0.5), Point3(3.5, 0.5, 0.5), Point3(3.5, 3.5, 0.5), Point3(0.5, 3.5, 0.5)};
  lid.triangles = {{0, 1, 2}, {0, 2, 3}};
  const auto r = prune_graph(g, MeshIndex(lid));
  CHECK(r.report.edges_removed == 9);
  CHECK(r.report.vertices_removed == 1);
  CHECK(r.report.components_after == 1);
  CHECK(r.graph.size() == 25);
  // A small patch cuts only the vertical edge.
  TriangleMesh patch;
  patch.vertices = {Point3(1.9, 1.9, 0.5), Point3(2.1, 1.9, 0.5), Point3(2.1, 2.1, 0.5), Point3(1.9, 2.1, 0.5)};
  patch.triangles = {{0, 1, 2}, {0, 2, 3}};
  const auto r2 = prune_graph(g, MeshIndex(patch));
  CHECK(r2.report.edges_removed == 1);
  CHECK(r2.report.vertices_removed == 0);
  CHECK(r2.graph.size() == g.size());
}

TEST_CASE("components are labelled largest first") {
  BinaryMask m(VolumeGeometry::axis_aligned({8, 3, 3}, Point3::Ones()));
  m.set(0, 0, 0);
  m.set(1, 0, 0);
  for (int i = 4; i < 8; ++i) m.set(i, 1, 1);
  const auto g = build_graph(m);
  const auto c = connected_components(g);
  CHECK(c.sizes == std::vector<std::int64_t>{4, 2});
  CHECK(c.labels[0] == 1);
  CHECK(c.labels[2] == 0);
  const auto big = largest_component(g);
  CHECK(big.size() == 4);
  CHECK(big.vertex_to_voxel.front() == m.geometry.linear_index(4, 1, 1));
}

TEST_CASE("normalized Laplacian") {
  const auto g = build_graph(cube(3));
  const LaplacianOperator op = laplacian(g);
  const Eigen::VectorXd u1 = op.null_vector();
  CHECK(u1.norm() == doctest::Approx(1.0));
  CHECK(op.apply(u1).norm() < 1e-14);
  const Eigen::MatrixXd L = op.dense();
  CHECK((L - L.transpose()).norm() == 0.0);
  CHECK((L - Eigen::MatrixXd(op.sparse())).norm() < 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  CHECK(es.eigenvalues().maxCoeff() < 2 + 1e-12);
  RowMatrix x = RowMatrix::Random(27, 3), y(27, 3);
  op.apply(x, y);
  CHECK((Eigen::MatrixXd(y) - L * Eigen::MatrixXd(x)).norm() < 1e-12);
  CHECK_THROWS_AS(LaplacianOperator(SparseAdjacency::from_edges(3, std::vector<std::pair<std::int32_t, std::int32_t>>{{0, 1}})),
                  DataError);
}

TEST_CASE("cycle adjacency") {
  const auto c = cycle_adjacency(8);
  CHECK(c.edge_count() == 8);
  for (int v = 0; v < 8; ++v) CHECK(c.degree(v) == 2);
}

TEST_CASE("CHCG1 round trip and corruption") {
  const auto dir = test::scratch("chcg");
  const auto ph = make_folded_sheet(random_sheet_options(3));
  const auto g = build_graph(ph.mask);
  write_graph((dir / "g.chcg").string(), g, "{\"k\":1}");
  std::string meta;
  const auto back = read_graph((dir / "g.chcg").string(), &meta);
  CHECK(meta == "{\"k\":1}");
  CHECK(back.adjacency == g.adjacency);
  CHECK(back.vertex_to_voxel == g.vertex_to_voxel);
  CHECK(back.geometry == g.geometry);
  auto bytes = test::slurp(dir / "g.chcg");
  test::spit(dir / "t.chcg", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_graph((dir / "t.chcg").string()), FormatError);
  bytes[0] = 'X';
  test::spit(dir / "m.chcg", bytes);
  CHECK_THROWS_AS(read_graph((dir / "m.chcg").string()), FormatError);
}

TEST_CASE("connection types and pruned edge export") {
  CHECK(connection_type(1, 0, 0) == "horizontal");
  CHECK(connection_type(0, 1, 0) == "vertical");
  CHECK(connection_type(0, 0, -1) == "vertical");
  CHECK(connection_type(1, 1, 0) == "diagonal");
  CHECK(connection_type(1, -1, 1) == "diagonal");
  const auto dir = test::scratch("pruned_csv");
  const auto ph = make_folded_sheet(SheetOptions{});
  const auto r = prune_graph(build_graph(ph.mask), MeshIndex(ph.surface));
  write_pruned_edges_csv((dir / "e.csv").string(), ph.mask.geometry, r.report, "hdr");
  const auto text = test::slurp(dir / "e.csv");
  CHECK(text.rfind("# hdr\ni_a,j_a,k_a,i_b,j_b,k_b,type\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2 + std::int64_t(r.report.removed.size()));
}

}
