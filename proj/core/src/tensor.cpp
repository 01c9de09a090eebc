#include "driftlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  values_.assign(checked_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const std::size_t expected = checked_product(shape_);
  if (expected != values_.size()) {
    throw ShapeError("tensor shape holds " + std::to_string(expected) + " values but " +
                     std::to_string(values_.size()) + " were given");
  }
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got rank " + std::to_string(rank()));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got rank " + std::to_string(rank()));
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) noexcept {
  return std::span<double>(values_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const noexcept {
  return std::span<const double>(values_).subspan(r * shape_[1], shape_[1]);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace driftlab
