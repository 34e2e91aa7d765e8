#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otanim/checks.hpp"
#include "otanim/resample.hpp"
#include "otanim/rng.hpp"

using namespace otanim;

TEST_CASE("flat grid collapses at zero quadric cost") {
  // every edge has a zero-cost direction when all faces are coplanar
  const TriangleMesh grid = make_grid_mesh(6, 6, 0.0, 1);
  const DecimateResult r = qem_decimate(grid, 9);
  CHECK(r.coarse.vertex_count() == 9);
  // kept vertices are original vertices
  for (std::size_t i = 0; i < r.kept.size(); ++i) {
    CHECK((r.coarse.vertex(i) - grid.vertex(static_cast<std::size_t>(r.kept[i]))).norm() == 0.0);
  }
  for (const Vec3& v : r.coarse.vertices()) CHECK(v.z == 0.0);
}

TEST_CASE("icosphere decimates to the quarter size") {
  const TriangleMesh sphere = make_icosphere(2);  // 162 vertices
  const DecimateResult r = qem_decimate(sphere, 41);
  CHECK(r.coarse.vertex_count() == 41);
  CHECK(r.coarse.is_connected());
  // selection rows reproduce coarse positions exactly
  for (std::size_t row = 0; row < r.selection.rows(); ++row) {
    const auto idx = r.selection.row_indices(row);
    const auto val = r.selection.row_values(row);
    REQUIRE(idx.size() == 1);
    CHECK(val[0] == 1.0);
    CHECK((sphere.vertex(idx[0]) - r.coarse.vertex(row)).norm() == 0.0);
  }
}

TEST_CASE("decimation preconditions") {
  const TriangleMesh sphere = make_icosphere(1);
  CHECK_THROWS_AS(qem_decimate(sphere, 3), std::invalid_argument);
  CHECK_THROWS_AS(qem_decimate(sphere, sphere.vertex_count()), std::invalid_argument);
}

TEST_CASE("selection is orthonormal on the coarse space") {
  const TriangleMesh m = make_noisy_sphere(2, 0.05, 3);
  const DecimateResult r = qem_decimate(m, 41);
  const SparseMatrix qqt_lhs = r.selection;
  // Q_d Q_d^T == I since rows are distinct one-hots
  const SparseMatrix qt = r.selection.transposed();
  for (std::size_t i = 0; i < qqt_lhs.rows(); ++i) {
    const auto icols = qqt_lhs.row_indices(i);
    for (std::size_t j = 0; j < qqt_lhs.rows(); ++j) {
      const double want = i == j ? 1.0 : 0.0;
      double got = 0.0;
      for (std::size_t k = 0; k < icols.size(); ++k) {
        got += qqt_lhs.row_values(i)[k] * qt.coeff(icols[k], j);
      }
      CHECK(got == want);
    }
  }
}

TEST_CASE("barycentric rows: coincident vertex and face barycenter") {
  const TriangleMesh coarse({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const std::vector<Vec3> pts{{1, 0, 0}, {1.0 / 3, 1.0 / 3, 0}};
  const SparseMatrix qu = barycentric_upsample(pts, coarse);
  // first point sits on vertex 1
  REQUIRE(qu.row_indices(0).size() == 1);
  CHECK(qu.row_indices(0)[0] == 1);
  CHECK(qu.row_values(0)[0] == doctest::Approx(1.0).epsilon(1e-12));
  // second point is the barycenter
  REQUIRE(qu.row_indices(1).size() == 3);
  for (const double w : qu.row_values(1)) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("points off the surface are clamped to the closest triangle point") {
  const TriangleMesh coarse({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const std::vector<Vec3> pts{{-1.0, -1.0, 0.7}, {2.0, 2.0, -0.3}};
  const SparseMatrix qu = barycentric_upsample(pts, coarse);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (const double w : qu.row_values(r)) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      s += w;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("upsampling reproduces points sampled on the coarse surface") {
  Rng rng(5);
  const TriangleMesh m = make_noisy_sphere(2, 0.03, 8);
  const DecimateResult dec = qem_decimate(m, 41);
  const FaceGeometry geom = face_geometry(dec.coarse);
  std::vector<Vec3> pts;
  for (int k = 0; k < 60; ++k) {
    const std::size_t f = rng.index(dec.coarse.face_count());
    if (geom.degenerate[f]) continue;
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& face = dec.coarse.face(f);
    pts.push_back(dec.coarse.vertex(face[0]) * (1 - u - v) + dec.coarse.vertex(face[1]) * u +
                  dec.coarse.vertex(face[2]) * v);
  }
  const SparseMatrix qu = barycentric_upsample(pts, dec.coarse);
  for (std::size_t q = 0; q < pts.size(); ++q) {
    Vec3 rec{};
    const auto idx = qu.row_indices(q);
    const auto val = qu.row_values(q);
    for (std::size_t k = 0; k < idx.size(); ++k) rec += dec.coarse.vertex(idx[k]) * val[k];
    CHECK((rec - pts[q]).norm() < 1e-9);
  }
}

TEST_CASE("upsample is identical for any thread count") {
  const TriangleMesh m = make_noisy_sphere(2, 0.05, 4);
  const DecimateResult dec = qem_decimate(m, 41);
  const SparseMatrix a = barycentric_upsample(m, dec.coarse, 1);
  const SparseMatrix b = barycentric_upsample(m, dec.coarse, 4);
  REQUIRE(a.nnz() == b.nnz());
  for (std::size_t i = 0; i < a.nnz(); ++i) {
    CHECK(a.values()[i] == b.values()[i]);
    CHECK(a.indices()[i] == b.indices()[i]);
  }
}

TEST_CASE("hierarchy sizes follow ceil(n/4)") {
  const TriangleMesh m = make_icosphere(2);  // 162
  const Hierarchy h = build_hierarchy(m, 2);
  CHECK(h.sizes() == std::vector<std::size_t>{162, 41, 11});
  CHECK(h.laplacians.size() == 3);
  for (const double l : h.lambda_max) {
    CHECK(l > 0.0);
    CHECK(l <= 2.0 + 1e-9);
  }

  const TriangleMesh m16 = make_test_mesh(16, 2);
  const Hierarchy h16 = build_hierarchy(m16, 1);
  CHECK(h16.sizes() == std::vector<std::size_t>{16, 4});

  CHECK_THROWS_AS(build_hierarchy(make_test_mesh(12, 2), 1), std::invalid_argument);
}

TEST_CASE("hierarchy rejects level counts that go below four vertices") {
  const TriangleMesh m = make_icosphere(1);  // 42 -> 11 -> 3 would break
  CHECK_NOTHROW(build_hierarchy(m, 1));
  CHECK_THROWS_AS(build_hierarchy(m, 2), std::invalid_argument);
}
