#include "otanim/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otanim/rng.hpp"

namespace otanim {

SparseMatrix::SparseMatrix(std::size_t n_rows, std::size_t n_cols,
                           std::vector<std::size_t> offsets, std::vector<std::size_t> indices,
                           std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  validate();
}

void SparseMatrix::validate() const {
  if (offsets_.size() != n_rows_ + 1 || offsets_.front() != 0) {
    throw std::invalid_argument("csr: offsets must have n_rows+1 entries starting at 0");
  }
  if (offsets_.back() != values_.size() || indices_.size() != values_.size()) {
    throw std::invalid_argument("csr: offsets/indices/values disagree on nnz");
  }
  for (std::size_t r = 0; r < n_rows_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) {
      throw std::invalid_argument("csr: offsets must be non-decreasing");
    }
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (indices_[k] >= n_cols_) throw std::invalid_argument("csr: column index out of range");
      if (k > offsets_[r] && indices_[k] <= indices_[k - 1]) {
        throw std::invalid_argument("csr: column indices must be strictly increasing per row");
      }
      if (!std::isfinite(values_[k])) throw std::invalid_argument("csr: non-finite value");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t n_rows, std::size_t n_cols,
                                         std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(n_rows + 1, 0);
  std::vector<std::size_t> indices;
  std::vector<double> values;
  indices.reserve(triplets.size());
  values.reserve(triplets.size());
  std::size_t i = 0;
  for (std::size_t r = 0; r < n_rows; ++r) {
    while (i < triplets.size() && triplets[i].row == r) {
      const std::size_t c = triplets[i].col;
      double v = 0.0;
      while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
        v += triplets[i].value;
        ++i;
      }
      if (v != 0.0) {
        indices.push_back(c);
        values.push_back(v);
      }
    }
    offsets[r + 1] = values.size();
  }
  if (i != triplets.size()) throw std::invalid_argument("csr: triplet row out of range");
  return SparseMatrix(n_rows, n_cols, std::move(offsets), std::move(indices), std::move(values));
}

double SparseMatrix::coeff(std::size_t r, std::size_t c) const {
  const auto idx = row_indices(r);
  const auto it = std::lower_bound(idx.begin(), idx.end(), c);
  if (it == idx.end() || *it != c) return 0.0;
  return values_[offsets_[r] + static_cast<std::size_t>(it - idx.begin())];
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<std::size_t> counts(n_cols_ + 1, 0);
  for (const std::size_t c : indices_) ++counts[c + 1];
  for (std::size_t c = 0; c < n_cols_; ++c) counts[c + 1] += counts[c];
  std::vector<std::size_t> offsets = counts;
  std::vector<std::size_t> indices(nnz());
  std::vector<double> values(nnz());
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      const std::size_t pos = counts[indices_[k]]++;
      indices[pos] = r;
      values[pos] = values_[k];
    }
  }
  return SparseMatrix(n_cols_, n_rows_, std::move(offsets), std::move(indices), std::move(values));
}

Tensor SparseMatrix::to_dense() const {
  Tensor d({n_rows_, n_cols_});
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      d.at(r, indices_[k]) = values_[k];
    }
  }
  return d;
}

void SparseMatrix::multiply_into(std::span<const double> x, std::size_t x_cols,
                                 std::span<double> y) const {
  for (std::size_t r = 0; r < n_rows_; ++r) {
    double* out = y.data() + r * x_cols;
    for (std::size_t c = 0; c < x_cols; ++c) out[c] = 0.0;
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      const double v = values_[k];
      const double* in = x.data() + indices_[k] * x_cols;
      for (std::size_t c = 0; c < x_cols; ++c) out[c] += v * in[c];
    }
  }
}

Tensor SparseMatrix::multiply(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(0) != n_cols_) {
    throw std::invalid_argument("sparse multiply: got " + shape_to_string(x.shape()) +
                                ", need rows == " + std::to_string(n_cols_));
  }
  Tensor y({n_rows_, x.dim(1)});
  multiply_into(x.values(), x.dim(1), y.values());
  return y;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (n_rows_ != n_cols_) return false;
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (std::fabs(values_[k] - coeff(indices_[k], r)) > tol) return false;
    }
  }
  return true;
}

PowerIterationResult power_iteration(const SparseMatrix& m, std::size_t iters,
                                     std::uint64_t seed) {
  if (m.rows() != m.cols()) throw std::invalid_argument("power_iteration: matrix must be square");
  if (iters < 1) throw std::invalid_argument("power_iteration: iters must be >= 1");
  const std::size_t n = m.rows();
  Rng rng = Rng(seed).child("power-iteration");
  std::vector<double> v(n);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    norm = 1.0;
  }
  for (double& x : v) x /= norm;

  std::vector<double> w(n);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    m.multiply_into(v, 1, w);
    lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) lambda += v[i] * w[i];
    double wn = 0.0;
    for (const double x : w) wn += x * x;
    wn = std::sqrt(wn);
    if (wn == 0.0) {
      // v is in the null space; eigenvalue estimate 0 with zero residual.
      return {0.0, 0.0, it + 1};
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
  }
  m.multiply_into(v, 1, w);
  lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) lambda += v[i] * w[i];
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = w[i] - lambda * v[i];
    res += d * d;
  }
  return {lambda, std::sqrt(res), iters};
}

}  // namespace otanim
