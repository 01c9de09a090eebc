#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "driftlab/tensor.hpp"

namespace driftlab {

enum class DatasetRole { source_train, source_test, target, target_samples };

std::string_view to_string(DatasetRole role) noexcept;

/// Square single-channel images without labels.
///
/// This is the only input type the self-supervised adaptation path accepts,
/// so class labels cannot leak into it.
class ImageSet {
 public:
  /// Throws ShapeError on a pixel count that is not a multiple of S*S,
  /// UsageError on an empty set or pixels outside [0, 1].
  ImageSet(std::size_t image_size, std::vector<double> pixels);

  std::size_t size() const noexcept { return count_; }
  std::size_t image_size() const noexcept { return image_size_; }
  std::size_t pixels_per_image() const noexcept { return image_size_ * image_size_; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<const double> image(std::size_t i) const noexcept;

  /// Rows are flattened images. Whole set, or the selected indices.
  Tensor batch() const;
  Tensor batch(std::span<const std::size_t> indices) const;

 private:
  std::size_t image_size_;
  std::size_t count_;
  std::vector<double> pixels_;
};

/// Labeled square images with a class count and a role tag.
class Dataset {
 public:
  /// Validates: N > 0, pixels in [0, 1], labels in [0, C), one label per image.
  Dataset(std::size_t image_size, std::size_t num_classes, std::vector<double> pixels,
          std::vector<int> labels, DatasetRole role);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t image_size() const noexcept { return image_size_; }
  std::size_t pixels_per_image() const noexcept { return image_size_ * image_size_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  DatasetRole role() const noexcept { return role_; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<const int> labels() const noexcept { return labels_; }
  std::span<const double> image(std::size_t i) const noexcept;

  Tensor batch() const;
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> labels_at(std::span<const std::size_t> indices) const;

  Dataset subset(std::span<const std::size_t> indices, DatasetRole role) const;
  Dataset with_role(DatasetRole role) const;
  /// Drops the labels.
  ImageSet images() const;

  /// SHA-256 over image size, class count, pixels and labels.
  std::string fingerprint() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t image_size_;
  std::size_t num_classes_;
  std::vector<double> pixels_;
  std::vector<int> labels_;
  DatasetRole role_;
};

}  // namespace driftlab
