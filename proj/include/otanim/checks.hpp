#pragma once

#include <string>
#include <vector>

#include "otanim/model.hpp"
#include "otanim/rng.hpp"

namespace otanim {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Oracle-backed verification suites. Each is deterministic and self-contained;
// `selftest` runs them all, the acceptance runner adds the slow end-to-end
// criteria on top.
CheckResult check_spectral_oracle();    // recurrence vs dense eigendecomposition
CheckResult check_ot_oracle();          // 1-d closed form vs permutation enumeration
CheckResult check_metric_axioms();      // symmetry, identity, triangle inequality
CheckResult check_gradient_suite();     // every op and the full loss vs finite differences
CheckResult check_resample_contracts(); // selection/interpolation row properties
CheckResult check_loss_identities();    // closed-form loss values

std::vector<CheckResult> run_fast_checks();

// ---- deterministic fixtures shared with the test binaries ----

// Height-field grid, rows x cols vertices, z = bump * smooth(x, y).
TriangleMesh make_grid_mesh(std::size_t rows, std::size_t cols, double bump, std::uint64_t seed);

// Connected triangle mesh with exactly n vertices (grid plus a fan of extras).
TriangleMesh make_test_mesh(std::size_t n, std::uint64_t seed);

// Icosphere with radial noise of the given amplitude.
TriangleMesh make_noisy_sphere(int subdiv, double noise, std::uint64_t seed);

// Random connected graph: spanning tree plus extra edges with probability p.
SparseMatrix random_connected_adjacency(std::size_t n, double extra_edge_prob, Rng& rng);

DiscreteMeasure random_measure(std::size_t n, std::size_t dim, Rng& rng);

// Single-level wrapper so small meshes can drive the model without pooling.
Hierarchy flat_hierarchy(const TriangleMesh& mesh);

// Miniature widths for finite-difference sweeps over every parameter.
ModelConfig toy_model_config();

}  // namespace otanim
