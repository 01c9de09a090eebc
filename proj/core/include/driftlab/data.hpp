#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/tensor.hpp"

namespace driftlab {

// ---------------------------------------------------------------------------
// Synthetic glyphs

/// Straight stroke in glyph-box coordinates: x to the right, y downwards, both in [0, 1].
struct Stroke {
  double x0, y0, x1, y1;
};

struct GlyphPrototype {
  std::string name;
  std::vector<Stroke> strokes;
};

/// The built-in "L", "F", "P", "7", "J", "r" prototypes. None has a quarter-turn
/// symmetry and no two are related by a quarter turn.
const std::vector<GlyphPrototype>& default_prototypes();

struct GlyphSpec {
  std::size_t image_size = 16;
  /// Number of classes; the first `classes` prototypes are used.
  std::size_t classes = 6;
  std::size_t samples_per_class = 250;
  int max_shift = 2;
  std::array<double, 3> scales{0.8, 1.0, 1.2};
  double intensity_min = 0.7;
  double intensity_max = 1.0;
  std::uint64_t seed = 1;
  /// Empty means default_prototypes().
  std::vector<GlyphPrototype> prototypes;

  /// Throws UsageError on out-of-range fields.
  void validate() const;
  const std::vector<GlyphPrototype>& active_prototypes() const;
};

/// Draws a prototype with the given jitter. `shift_x`/`shift_y` are in pixels.
std::vector<double> render_glyph(const GlyphPrototype& proto, std::size_t image_size, double scale,
                                 int shift_x, int shift_y, double intensity);

/// Centred, unit-scale, full-intensity rendering.
std::vector<double> render_prototype(const GlyphPrototype& proto, std::size_t image_size);

/// Throws GenerationError naming the first offending pair unless, for every
/// prototype P, quarter turn q in {1,2,3} and prototype Q (including P), the
/// L1 distance between rotate(P, q) and Q exceeds 0.05 * S^2. Distinct
/// prototypes must also differ from each other unrotated.
void check_rotation_distinctness(std::span<const GlyphPrototype> prototypes, std::size_t image_size);

struct GlyphSplits {
  Dataset train;
  Dataset test;
};

/// Balanced 80/20 train/test split, pure function of the spec.
GlyphSplits generate_glyphs(const GlyphSpec& spec);

// ---------------------------------------------------------------------------
// Quarter-turn rotation

/// q counter-clockwise quarter turns of a flattened S x S image.
/// q = 1 maps out[r][c] = in[c][S-1-r]. Any integer q is reduced mod 4.
std::vector<double> rotate_quarter(std::span<const double> image, std::size_t image_size, int q);

/// Rank-2 square image. Throws ShapeError for a non-square tensor.
Tensor rotate_quarter(const Tensor& image, int q);

// ---------------------------------------------------------------------------
// Corruptions

enum class Corruption { none, gaussian_noise, impulse_noise, blur, contrast, brightness, pixelate };

std::string_view to_string(Corruption c) noexcept;
/// Throws UsageError listing the valid names.
Corruption parse_corruption(std::string_view name);
/// Every corruption except `none`, in declaration order.
std::span<const Corruption> all_corruptions() noexcept;

struct DomainSpec {
  Corruption corruption = Corruption::none;
  int severity = 5;

  /// "gaussian_noise:5", or "none".
  std::string name() const;
  /// Accepts "name" (severity 5) or "name:severity".
  static DomainSpec parse(std::string_view text);
  void validate() const;

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Per-image corruption, deterministic per (seed, image index), labels untouched.
/// corruption == none returns the input unchanged.
Dataset corrupt(const Dataset& data, const DomainSpec& domain, std::uint64_t seed);

/// Corrupts one flattened image in place.
void corrupt_image(std::span<double> image, std::size_t image_size, const DomainSpec& domain,
                   std::uint64_t image_seed);

// ---------------------------------------------------------------------------
// Sampling

/// n samples drawn uniformly without replacement (role target_samples).
/// With `balanced`, n is spread as evenly as possible over the classes instead.
Dataset sample_target_set(const Dataset& target, std::size_t n, std::uint64_t seed, bool balanced = false);

// ---------------------------------------------------------------------------
// Files

/// IDX images (magic 0x00000803, N x rows x cols bytes) and labels
/// (magic 0x00000801). Throws FormatError with the failing byte offset.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 DatasetRole role = DatasetRole::source_train);

/// Flat little-endian container: "DLB1", S, C, N (uint32), N*S*S float64 pixels, N int32 labels.
void write_dlb(const Dataset& data, const std::filesystem::path& path);
Dataset read_dlb(const std::filesystem::path& path, DatasetRole role = DatasetRole::target);
/// Reads only the header and pixel block; the label block is never parsed.
ImageSet read_dlb_images(const std::filesystem::path& path);

std::vector<unsigned char> encode_dlb(const Dataset& data);
Dataset decode_dlb(std::span<const unsigned char> bytes, DatasetRole role = DatasetRole::target);
ImageSet decode_dlb_images(std::span<const unsigned char> bytes);

}  // namespace driftlab
