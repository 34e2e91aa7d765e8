#include "otanim/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace otanim {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape " + shape_to_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = value;
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != data_.size()) {
    throw std::invalid_argument("reshape: " + shape_to_string(shape_) + " to " +
                                shape_to_string(shape) + " changes element count");
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::check_finite(const std::string& where) const {
  // sum of |x| is finite iff every element is; one pass, no branches.
  double acc = 0.0;
  for (const double x : data_) acc += std::fabs(x);
  if (!std::isfinite(acc)) {
    throw std::runtime_error("non-finite values in " + where);
  }
}

}  // namespace otanim
