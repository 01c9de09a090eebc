#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace driftlab {

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor. Every extent must be positive.
  explicit Tensor(std::vector<std::size_t> shape);
  /// Throws ShapeError unless product(shape) == values.size().
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  // Rank-2 accessors. rows()/cols() throw ShapeError for other ranks.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * shape_[1] + c]; }
  std::span<double> row(std::size_t r) noexcept;
  std::span<const double> row(std::size_t r) const noexcept;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace driftlab
