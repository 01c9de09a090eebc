#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace driftlab {

/// Dimensions of one dense layer: a out_dim x in_dim weight matrix plus out_dim biases.
struct LayerShape {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  std::size_t weight_count() const noexcept { return in_dim * out_dim; }
  std::size_t param_count() const noexcept { return in_dim * out_dim + out_dim; }

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Flat storage for the parameters of a stack of dense layers.
///
/// Each layer occupies a contiguous block: the row-major weight matrix
/// (out_dim rows of in_dim) followed by the bias vector. The same layout is
/// shared by model parameters, gradients, Fisher diagonals and anchors, so
/// all per-parameter arithmetic in the EWC code is a loop over values().
class ParamSet {
 public:
  ParamSet() = default;
  /// Zero-filled parameters for the given layers.
  explicit ParamSet(std::vector<LayerShape> layers);

  const std::vector<LayerShape>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Weights and bias of one layer, contiguous.
  std::span<double> layer(std::size_t l) noexcept;
  std::span<const double> layer(std::size_t l) const noexcept;
  std::span<double> weights(std::size_t l) noexcept;
  std::span<const double> weights(std::size_t l) const noexcept;
  std::span<double> bias(std::size_t l) noexcept;
  std::span<const double> bias(std::size_t l) const noexcept;

  /// Same layer shapes (and therefore the same flat layout).
  bool congruent(const ParamSet& other) const noexcept { return layers_ == other.layers_; }
  bool all_finite() const noexcept;

  /// Layers of `front` followed by layers of `back`.
  static ParamSet concat(const ParamSet& front, const ParamSet& back);
  /// Inverse of concat: the first `count` layers and the rest.
  std::pair<ParamSet, ParamSet> split(std::size_t count) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

using GradientSet = ParamSet;

/// Throws ShapeError (prefixed with `context`) unless a and b are congruent.
void require_congruent(const ParamSet& a, const ParamSet& b, const char* context);

/// Hex SHA-256 of the layer shapes and the exact bit patterns of all values.
std::string fingerprint(const ParamSet& params);

/// Hex SHA-256 of an arbitrary byte range.
std::string sha256_hex(std::span<const unsigned char> bytes);

}  // namespace driftlab
