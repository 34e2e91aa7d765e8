#pragma once

#include "otanim/rng.hpp"
#include "otanim/sparse.hpp"
#include "otanim/tape.hpp"

namespace otanim {

// (2 / lambda_max) * L - I. Spectrum lands in [-1, 1] when lambda_max is the
// true largest eigenvalue of L.
SparseMatrix scale_laplacian(const SparseMatrix& laplacian, double lambda_max);

// Chebyshev polynomial value by the three-term recurrence.
double cheb_poly_scalar(std::size_t k, double x);

// Spectral filter of order K: y = sum_k T_k(L~) X theta_k + bias, where the
// T_k(L~) X terms come from Z_0 = X, Z_1 = L~ X, Z_k = 2 L~ Z_{k-1} - Z_{k-2}.
struct ChebConvLayer {
  std::size_t order = 6;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  ChebConvLayer(std::size_t order, std::size_t in_channels, std::size_t out_channels)
      : order(order), in_channels(in_channels), out_channels(out_channels) {}

  std::vector<std::size_t> theta_shape() const { return {order, in_channels, out_channels}; }
  std::vector<std::size_t> bias_shape() const { return {out_channels}; }

  Tensor init_theta(Rng& rng) const;
  Tensor init_bias() const { return Tensor(bias_shape()); }
};

// theta: (K x Fin x Fout) on the tape, bias: (Fout), x: (N x Fin).
// The scaled Laplacian is constant; gradients flow into x, theta, bias.
Var cheb_conv(const SparseMatrix& scaled_laplacian, Var x, Var theta, Var bias,
              const ChebConvLayer& layer);

}  // namespace otanim
