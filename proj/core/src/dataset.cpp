#include "driftlab/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>

#include "driftlab/errors.hpp"
#include "driftlab/params.hpp"

namespace driftlab {

std::string_view to_string(DatasetRole role) noexcept {
  switch (role) {
    case DatasetRole::source_train: return "source_train";
    case DatasetRole::source_test: return "source_test";
    case DatasetRole::target: return "target";
    case DatasetRole::target_samples: return "target_samples";
  }
  return "unknown";
}

namespace {

void check_pixels(std::span<const double> pixels) {
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (!(pixels[i] >= 0.0 && pixels[i] <= 1.0)) {
      throw UsageError("pixel " + std::to_string(i) + " outside [0, 1]");
    }
  }
}

Tensor gather_rows(std::span<const double> pixels, std::size_t width, std::size_t count,
                   std::span<const std::size_t> indices) {
  Tensor out = Tensor::matrix(indices.size(), width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= count) throw UsageError("sample index out of range");
    std::copy_n(pixels.begin() + indices[r] * width, width, out.row(r).begin());
  }
  return out;
}

}  // namespace

ImageSet::ImageSet(std::size_t image_size, std::vector<double> pixels)
    : image_size_(image_size), count_(0), pixels_(std::move(pixels)) {
  if (image_size_ == 0) throw ShapeError("image size must be positive");
  if (pixels_.size() % pixels_per_image() != 0) {
    throw ShapeError("pixel count is not a multiple of " + std::to_string(pixels_per_image()));
  }
  count_ = pixels_.size() / pixels_per_image();
  if (count_ == 0) throw UsageError("image set is empty");
  check_pixels(pixels_);
}

std::span<const double> ImageSet::image(std::size_t i) const noexcept {
  return std::span<const double>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
}

Tensor ImageSet::batch() const { return Tensor({count_, pixels_per_image()}, pixels_); }

Tensor ImageSet::batch(std::span<const std::size_t> indices) const {
  return gather_rows(pixels_, pixels_per_image(), count_, indices);
}

Dataset::Dataset(std::size_t image_size, std::size_t num_classes, std::vector<double> pixels,
                 std::vector<int> labels, DatasetRole role)
    : image_size_(image_size),
      num_classes_(num_classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      role_(role) {
  if (image_size_ == 0) throw ShapeError("image size must be positive");
  if (num_classes_ == 0) throw UsageError("dataset needs at least one class");
  if (labels_.empty()) throw UsageError("dataset is empty");
  if (pixels_.size() != labels_.size() * pixels_per_image()) {
    throw ShapeError("dataset holds " + std::to_string(pixels_.size()) + " pixels for " +
                     std::to_string(labels_.size()) + " images of " + std::to_string(image_size_) +
                     "x" + std::to_string(image_size_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
      throw LabelError("label " + std::to_string(labels_[i]) + " of sample " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
  check_pixels(pixels_);
}

std::span<const double> Dataset::image(std::size_t i) const noexcept {
  return std::span<const double>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
}

Tensor Dataset::batch() const { return Tensor({size(), pixels_per_image()}, pixels_); }

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  return gather_rows(pixels_, pixels_per_image(), size(), indices);
}

std::vector<int> Dataset::labels_at(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels_.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices, DatasetRole role) const {
  std::vector<double> pixels;
  pixels.reserve(indices.size() * pixels_per_image());
  for (std::size_t i : indices) {
    if (i >= size()) throw UsageError("subset index out of range");
    auto img = image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
  }
  return Dataset(image_size_, num_classes_, std::move(pixels), labels_at(indices), role);
}

Dataset Dataset::with_role(DatasetRole role) const {
  Dataset copy = *this;
  copy.role_ = role;
  return copy;
}

ImageSet Dataset::images() const { return ImageSet(image_size_, pixels_); }

std::string Dataset::fingerprint() const {
  std::vector<unsigned char> bytes;
  bytes.reserve(16 + pixels_.size() * 8 + labels_.size() * 4);
  auto put = [&bytes](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  put(image_size_, 8);
  put(num_classes_, 8);
  for (double v : pixels_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits, 8);
  }
  for (int label : labels_) put(static_cast<std::uint32_t>(label), 4);
  return sha256_hex(bytes);
}

}  // namespace driftlab
