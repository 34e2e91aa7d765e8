#include "otanim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace otanim {

EighResult jacobi_eigh(const Tensor& symmetric, double tol, std::size_t max_sweeps) {
  if (symmetric.rank() != 2 || symmetric.dim(0) != symmetric.dim(1)) {
    throw std::invalid_argument("jacobi_eigh: matrix must be square");
  }
  const std::size_t n = symmetric.dim(0);
  Tensor a = symmetric;
  Tensor v = Tensor::identity(n);

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (std::sqrt(off) <= tol) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a.at(i, i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return diag[i] < diag[j]; });

  EighResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Tensor({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = diag[order[j]];
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors.at(i, j) = v.at(i, order[j]);
  }
  return out;
}

void orthonormalize_columns(Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("orthonormalize_columns: rank-2 required");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < rows; ++i) dot += m.at(i, j) * m.at(i, k);
      for (std::size_t i = 0; i < rows; ++i) m.at(i, j) -= dot * m.at(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += m.at(i, j) * m.at(i, j);
    norm = std::sqrt(norm);
    if (norm > 1e-300) {
      for (std::size_t i = 0; i < rows; ++i) m.at(i, j) /= norm;
    } else {
      for (std::size_t i = 0; i < rows; ++i) m.at(i, j) = 0.0;
    }
  }
}

}  // namespace otanim
