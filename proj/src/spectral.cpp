#include "otanim/spectral.hpp"

#include <cmath>
#include <stdexcept>

namespace otanim {

SparseMatrix scale_laplacian(const SparseMatrix& laplacian, double lambda_max) {
  if (laplacian.rows() != laplacian.cols()) {
    throw std::invalid_argument("scale_laplacian: matrix must be square");
  }
  if (!(lambda_max > 0.0)) throw std::invalid_argument("scale_laplacian: lambda_max must be > 0");
  const double s = 2.0 / lambda_max;
  std::vector<SparseMatrix::Triplet> trips;
  trips.reserve(laplacian.nnz() + laplacian.rows());
  for (std::size_t r = 0; r < laplacian.rows(); ++r) {
    const auto idx = laplacian.row_indices(r);
    const auto val = laplacian.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      trips.push_back({r, idx[k], s * val[k]});
    }
    trips.push_back({r, r, -1.0});
  }
  return SparseMatrix::from_triplets(laplacian.rows(), laplacian.cols(), std::move(trips));
}

double cheb_poly_scalar(std::size_t k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (std::size_t i = 2; i <= k; ++i) {
    const double next = 2.0 * x * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Tensor ChebConvLayer::init_theta(Rng& rng) const {
  // variance-preserving uniform fan bound over the K stacked basis terms
  const double bound =
      std::sqrt(6.0 / (static_cast<double>(order * in_channels) + static_cast<double>(out_channels)));
  Tensor theta(theta_shape());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = rng.uniform(-bound, bound);
  return theta;
}

Var cheb_conv(const SparseMatrix& scaled_laplacian, Var x, Var theta, Var bias,
              const ChebConvLayer& layer) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != layer.in_channels) {
    throw std::invalid_argument("cheb_conv: input is " + shape_to_string(xv.shape()) +
                                ", expected (N x " + std::to_string(layer.in_channels) + ")");
  }
  if (scaled_laplacian.rows() != xv.dim(0)) {
    throw std::invalid_argument("cheb_conv: Laplacian size " +
                                std::to_string(scaled_laplacian.rows()) +
                                " does not match vertex count " + std::to_string(xv.dim(0)));
  }
  if (theta.value().shape() != layer.theta_shape() || bias.value().shape() != layer.bias_shape()) {
    throw std::invalid_argument("cheb_conv: parameter shape mismatch");
  }

  const std::size_t fin = layer.in_channels;
  const std::size_t fout = layer.out_channels;

  // L~ is symmetric, so backward reuses the forward matrix.
  Var z_prev;  // Z_{k-2}
  Var z_cur;   // Z_{k-1}
  Var acc;
  for (std::size_t k = 0; k < layer.order; ++k) {
    Var z_k;
    if (k == 0) {
      z_k = x;
    } else if (k == 1) {
      z_k = sparse_matmul(scaled_laplacian, x, &scaled_laplacian);
    } else {
      z_k = sub(scale(sparse_matmul(scaled_laplacian, z_cur, &scaled_laplacian), 2.0), z_prev);
    }
    Var theta_k = reshape(slice_rows(theta, k, k + 1), {fin, fout});
    Var term = matmul(z_k, theta_k);
    acc = k == 0 ? term : add(acc, term);
    z_prev = z_cur;
    z_cur = z_k;
  }
  return add_rowvec(acc, bias);
}

}  // namespace otanim
