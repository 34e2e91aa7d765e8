#pragma once

#include <filesystem>
#include <iosfwd>

#include "otanim/sparse.hpp"
#include "otanim/tensor.hpp"

namespace otanim {

// Binary tensor container. Layout, little-endian throughout:
//   "OTTK" | u32 version=1 | u8 dtype (1 = f64) | u8 rank | u64 shape[rank] | f64 payload
void write_ottk(std::ostream& out, const Tensor& t);
void write_ottk(const std::filesystem::path& path, const Tensor& t);
Tensor read_ottk(std::istream& in);
Tensor read_ottk(const std::filesystem::path& path);

// A CSR matrix as three OTTK tensors next to each other:
// <stem>.offsets.ottk, <stem>.indices.ottk, <stem>.values.ottk.
// Offsets/indices ride as f64, exact for any index below 2^53.
void write_ottk_sparse(const std::filesystem::path& stem, const SparseMatrix& m);
SparseMatrix read_ottk_sparse(const std::filesystem::path& stem, std::size_t n_cols);

}  // namespace otanim
