#pragma once

#include <vector>

#include "otanim/tensor.hpp"

namespace otanim {

struct EighResult {
  std::vector<double> eigenvalues;  // ascending
  Tensor eigenvectors;              // columns match eigenvalues
};

// Cyclic Jacobi rotations on a dense symmetric matrix. Intended for small n
// (test oracles, Rayleigh-Ritz in PCA); cost O(n^3) per sweep.
EighResult jacobi_eigh(const Tensor& symmetric, double tol = 1e-12, std::size_t max_sweeps = 64);

// Thin QR orthonormalization of the columns of a (rows x cols) matrix,
// in place, by modified Gram-Schmidt. Zero columns are replaced with zeros.
void orthonormalize_columns(Tensor& m);

}  // namespace otanim
