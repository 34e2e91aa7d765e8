#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "otanim/mesh.hpp"
#include "otanim/sparse.hpp"

namespace otanim {

// Raised when greedy collapse runs out of legal moves before the target size.
struct DecimationStuck : std::runtime_error {
  DecimationStuck(std::size_t achieved_, std::size_t target_)
      : std::runtime_error("decimation stuck at " + std::to_string(achieved_) +
                           " vertices (target " + std::to_string(target_) + ")"),
        achieved(achieved_),
        target(target_) {}
  std::size_t achieved;
  std::size_t target;
};

struct DecimateResult {
  TriangleMesh coarse;
  SparseMatrix selection;  // (target_n x N) one-hot rows picking kept vertices
  std::vector<int> kept;   // original index of each coarse vertex, ascending
};

// Greedy edge collapse with Garland-Heckbert vertex quadrics. Collapses merge
// an edge into one of its existing endpoints, so coarse vertices are a subset
// of the input vertices. Collapses that would flip a face normal or break the
// edge link condition are rejected. Boundary edges carry an extra constraint
// quadric (plane through the edge, perpendicular to the adjacent face).
DecimateResult qem_decimate(const TriangleMesh& mesh, std::size_t target_n);

// Interpolation matrix (#points x coarse size): each point row holds the
// barycentric weights of the closest point on its nearest coarse triangle.
// Weights are nonnegative and sum to 1.
SparseMatrix barycentric_upsample(std::span<const Vec3> fine_points, const TriangleMesh& coarse,
                                  unsigned threads = 1);
SparseMatrix barycentric_upsample(const TriangleMesh& fine, const TriangleMesh& coarse,
                                  unsigned threads = 1);

struct ResampleLevel {
  TriangleMesh mesh;      // coarse mesh of this level
  SparseMatrix down;      // (n_k x n_{k-1}) selection
  SparseMatrix up;        // (n_{k-1} x n_k) barycentric interpolation
  std::vector<int> kept;  // indices into the previous (finer) level
};

// Multi-scale pyramid: level k has ceil(size_{k-1} / 4) vertices. Per-level
// normalized Laplacians and their largest eigenvalue are precomputed for
// spectral filtering (power iteration, 2.0 fallback when unconverged).
struct Hierarchy {
  TriangleMesh base;
  std::vector<ResampleLevel> levels;
  std::vector<SparseMatrix> laplacians;  // levels.size() + 1 entries, finest first
  std::vector<double> lambda_max;

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s{base.vertex_count()};
    for (const auto& l : levels) s.push_back(l.mesh.vertex_count());
    return s;
  }
};

Hierarchy build_hierarchy(const TriangleMesh& mesh, std::size_t levels = 3, unsigned threads = 1);

}  // namespace otanim
