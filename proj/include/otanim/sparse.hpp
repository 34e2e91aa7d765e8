#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otanim/tensor.hpp"

namespace otanim {

// Compressed sparse row matrix. Immutable once built; holds graph Laplacians
// and the resampling transforms. Never differentiated.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<std::size_t> offsets,
               std::vector<std::size_t> indices, std::vector<double> values);

  // Duplicates are summed; entries with value 0 after summing are kept out.
  static SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                    std::vector<Triplet> triplets);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::size_t> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  std::span<const std::size_t> row_indices(std::size_t r) const {
    return std::span<const std::size_t>(indices_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }
  std::span<const double> row_values(std::size_t r) const {
    return std::span<const double>(values_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

  double coeff(std::size_t r, std::size_t c) const;

  SparseMatrix transposed() const;
  Tensor to_dense() const;

  // y = this * x for a dense x with cols(this) rows.
  Tensor multiply(const Tensor& x) const;
  void multiply_into(std::span<const double> x, std::size_t x_cols, std::span<double> y) const;

  bool is_symmetric(double tol = 0.0) const;

 private:
  void validate() const;

  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
};

struct PowerIterationResult {
  double eigenvalue = 0.0;
  double residual = 0.0;  // |Av - lambda v| after the final iteration
  std::size_t iterations = 0;
};

// Largest-magnitude eigenvalue of a symmetric matrix by power iteration with a
// seeded start vector. Deterministic given (matrix, iters, seed).
PowerIterationResult power_iteration(const SparseMatrix& m, std::size_t iters, std::uint64_t seed);

}  // namespace otanim
