#pragma once

#include <span>
#include <vector>

#include "otanim/mesh.hpp"
#include "otanim/tape.hpp"

namespace otanim {

// Weighted point set in R^d; weights are a probability vector.
struct DiscreteMeasure {
  std::size_t dim = 0;
  std::vector<double> supports;  // n x dim, row-major
  std::vector<double> weights;   // n entries, nonnegative, sum 1 within 1e-9

  std::size_t count() const { return weights.size(); }
  std::span<const double> support(std::size_t i) const {
    return std::span<const double>(supports).subspan(i * dim, dim);
  }
  void validate() const;
};

DiscreteMeasure make_measure(std::size_t dim, std::vector<double> supports,
                             std::vector<double> weights);

// Rigid-free frame used before varifold construction: positions are centered
// on `center` and divided by `scale` (a mesh's mean edge length).
struct VarifoldScaling {
  Vec3 center{};
  double scale = 1.0;
};

VarifoldScaling varifold_scaling(const TriangleMesh& mesh);

// One atom per non-degenerate face: support is (barycenter, normal_scale *
// unit normal) in R^6, weight is the face area normalized over the mesh.
// Degenerate faces are skipped. Optional scaling is applied to positions
// before barycenters are taken (normals are invariant to it).
DiscreteMeasure mesh_to_varifold(const TriangleMesh& mesh, double normal_scale,
                                 const VarifoldScaling* scaling = nullptr);

// Exact W_p^p between 1-d discrete measures via the merged quantile
// staircase. Optional grad outputs receive dW/dx per support.
double wasserstein_1d(std::span<const double> xs, std::span<const double> xw,
                      std::span<const double> ys, std::span<const double> yw, double p,
                      std::span<double> grad_x = {}, std::span<double> grad_y = {});
double wasserstein_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p);

// L unit directions on S^{d-1}, normalized Gaussian draws, fixed by seed.
struct ProjectionSet {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::vector<double> directions;  // L x dim, each row unit norm

  std::span<const double> direction(std::size_t l) const {
    return std::span<const double>(directions).subspan(l * dim, dim);
  }
};

ProjectionSet sample_projections(std::size_t dim, std::size_t count, std::uint64_t seed);

struct SwdEstimate {
  double value = 0.0;      // mean of per-projection W_p^p
  double std_error = 0.0;  // sample standard error of that mean
  std::vector<double> per_projection;
};

SwdEstimate sliced_wasserstein(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p,
                               const ProjectionSet& projections);

// Brute-force W_p^p for equal 1/n weights: minimum mean transport cost over
// all n! pairings. n is capped at 8.
double exact_wasserstein_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p);

// Differentiable sliced Wasserstein between the varifold of the predicted
// positions (a tape node, N x 3) and a fixed target varifold. Face weights are
// gradient-stopped; the per-projection sorted couplings freeze at forward
// time; gradients reach the positions through barycenters and unit normals.
// `weight_override` substitutes the pred-side atom weights; finite-difference
// probes pass the base-point weights so the stopped path stays fixed.
Var swd_loss_op(Var predicted_positions, const std::vector<TriangleMesh::Face>& faces,
                const DiscreteMeasure& target_varifold, const VarifoldScaling& scaling,
                double normal_scale, const ProjectionSet& projections, double p = 2.0,
                const std::vector<double>* weight_override = nullptr);

// Convenience wrapper: scaling and target varifold come from the target mesh.
Var swd_loss_op(Var predicted_positions, const TriangleMesh& target_mesh, double normal_scale,
                const ProjectionSet& projections, double p = 2.0,
                const std::vector<double>* weight_override = nullptr);

// Pred-side varifold weights at the given positions, in atom order.
std::vector<double> swd_pred_weights(const Tensor& positions,
                                     const std::vector<TriangleMesh::Face>& faces,
                                     const VarifoldScaling& scaling);

}  // namespace otanim
