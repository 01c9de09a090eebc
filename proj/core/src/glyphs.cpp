#include <algorithm>
#include <cmath>
#include <string>

#include "driftlab/data.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

// Glyph box side as a fraction of the image side, at scale 1.
constexpr double kBoxFraction = 0.55;
// Half the stroke width in pixels; coverage falls off linearly over one pixel beyond it.
constexpr double kHalfWidth = 0.3;

double segment_distance(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0;
  const double dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (s.x0 + t * dx);
  const double ey = py - (s.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

const std::vector<GlyphPrototype>& default_prototypes() {
  static const std::vector<GlyphPrototype> kPrototypes = {
      {"L", {{0.2, 0.0, 0.2, 1.0}, {0.2, 1.0, 0.85, 1.0}}},
      {"F", {{0.2, 0.0, 0.2, 1.0}, {0.2, 0.0, 0.85, 0.0}, {0.2, 0.4, 0.6, 0.4}}},
      {"P", {{0.2, 0.0, 0.2, 1.0}, {0.2, 0.0, 0.85, 0.0}, {0.85, 0.0, 0.85, 0.6}, {0.85, 0.6, 0.2, 0.6}}},
      {"7", {{0.15, 0.0, 0.85, 0.0}, {0.85, 0.0, 0.35, 1.0}}},
      {"J", {{0.75, 0.0, 0.75, 1.0}, {0.75, 1.0, 0.2, 1.0}, {0.2, 1.0, 0.2, 0.65}}},
      {"r", {{0.3, 0.3, 0.3, 1.0}, {0.3, 0.55, 0.55, 0.3}, {0.55, 0.3, 0.85, 0.3}}},
  };
  return kPrototypes;
}

void GlyphSpec::validate() const {
  if (image_size < 4) throw UsageError("glyph image size must be at least 4");
  const auto& protos = active_prototypes();
  if (classes < 2 || classes > protos.size()) {
    throw UsageError("glyph classes must be in [2, " + std::to_string(protos.size()) + "]");
  }
  if (samples_per_class < 5) throw UsageError("need at least 5 samples per class for the 80/20 split");
  if (max_shift < 0) throw UsageError("glyph max_shift must be non-negative");
  for (double s : scales) {
    if (!(s > 0.0)) throw UsageError("glyph scales must be positive");
  }
  if (!(intensity_min > 0.0 && intensity_min <= intensity_max && intensity_max <= 1.0)) {
    throw UsageError("glyph intensity range must satisfy 0 < min <= max <= 1");
  }
}

const std::vector<GlyphPrototype>& GlyphSpec::active_prototypes() const {
  return prototypes.empty() ? default_prototypes() : prototypes;
}

std::vector<double> render_glyph(const GlyphPrototype& proto, std::size_t image_size, double scale,
                                 int shift_x, int shift_y, double intensity) {
  const double side = static_cast<double>(image_size);
  const double box = kBoxFraction * side * scale;
  const double cx = side / 2.0 + shift_x;
  const double cy = side / 2.0 + shift_y;
  std::vector<double> img(image_size * image_size, 0.0);
  for (std::size_t r = 0; r < image_size; ++r) {
    for (std::size_t c = 0; c < image_size; ++c) {
      const double u = (static_cast<double>(c) + 0.5 - cx) / box + 0.5;
      const double v = (static_cast<double>(r) + 0.5 - cy) / box + 0.5;
      double d = INFINITY;
      for (const auto& s : proto.strokes) d = std::min(d, segment_distance(u, v, s));
      const double coverage = std::clamp(1.0 - (d * box - kHalfWidth), 0.0, 1.0);
      img[r * image_size + c] = intensity * coverage;
    }
  }
  return img;
}

std::vector<double> render_prototype(const GlyphPrototype& proto, std::size_t image_size) {
  return render_glyph(proto, image_size, 1.0, 0, 0, 1.0);
}

void check_rotation_distinctness(std::span<const GlyphPrototype> prototypes, std::size_t image_size) {
  const double threshold = 0.05 * static_cast<double>(image_size * image_size);
  std::vector<std::vector<double>> rendered;
  rendered.reserve(prototypes.size());
  for (const auto& p : prototypes) rendered.push_back(render_prototype(p, image_size));

  for (std::size_t a = 0; a < prototypes.size(); ++a) {
    for (int q = 0; q < 4; ++q) {
      const auto turned = rotate_quarter(rendered[a], image_size, q);
      for (std::size_t b = 0; b < prototypes.size(); ++b) {
        if (q == 0 && a == b) continue;
        double l1 = 0.0;
        for (std::size_t k = 0; k < turned.size(); ++k) l1 += std::abs(turned[k] - rendered[b][k]);
        if (!(l1 > threshold)) {
          throw GenerationError("glyph classes " + std::to_string(a) + " ('" + prototypes[a].name +
                                "') and " + std::to_string(b) + " ('" + prototypes[b].name +
                                "') alias under a rotation of " + std::to_string(90 * q) +
                                " degrees (L1 distance " + std::to_string(l1) + " <= " +
                                std::to_string(threshold) + ")");
        }
      }
    }
  }
}

GlyphSplits generate_glyphs(const GlyphSpec& spec) {
  spec.validate();
  const auto& all = spec.active_prototypes();
  std::span<const GlyphPrototype> protos(all.data(), spec.classes);
  check_rotation_distinctness(protos, spec.image_size);

  const std::size_t per_class = spec.samples_per_class;
  const std::size_t train_per_class = per_class * 4 / 5;
  std::vector<double> train_px, test_px;
  std::vector<int> train_labels, test_labels;

  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      Rng rng(derive_seed(spec.seed, {stream::kGlyph, c, s}));
      const double scale = spec.scales[rng.index(spec.scales.size())];
      const int span = 2 * spec.max_shift + 1;
      const int dx = static_cast<int>(rng.index(static_cast<std::size_t>(span))) - spec.max_shift;
      const int dy = static_cast<int>(rng.index(static_cast<std::size_t>(span))) - spec.max_shift;
      const double intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
      auto img = render_glyph(protos[c], spec.image_size, scale, dx, dy, intensity);
      auto& px = s < train_per_class ? train_px : test_px;
      auto& labels = s < train_per_class ? train_labels : test_labels;
      px.insert(px.end(), img.begin(), img.end());
      labels.push_back(static_cast<int>(c));
    }
  }

  // Interleave classes with a fixed permutation so file order carries no label structure.
  auto permute = [&](std::vector<double>& px, std::vector<int>& labels, std::uint64_t tag) {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(spec.seed, {stream::kSplit, tag}));
    shuffle(std::span<std::size_t>(order), rng);
    const std::size_t n = spec.image_size * spec.image_size;
    std::vector<double> px2(px.size());
    std::vector<int> labels2(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      std::copy_n(px.begin() + order[i] * n, n, px2.begin() + i * n);
      labels2[i] = labels[order[i]];
    }
    px.swap(px2);
    labels.swap(labels2);
  };
  permute(train_px, train_labels, 0);
  permute(test_px, test_labels, 1);

  return {Dataset(spec.image_size, spec.classes, std::move(train_px), std::move(train_labels),
                  DatasetRole::source_train),
          Dataset(spec.image_size, spec.classes, std::move(test_px), std::move(test_labels),
                  DatasetRole::source_test)};
}

std::vector<double> rotate_quarter(std::span<const double> image, std::size_t image_size, int q) {
  const std::size_t n = image_size;
  if (image.size() != n * n) {
    throw ShapeError("image of " + std::to_string(image.size()) + " pixels is not " +
                     std::to_string(n) + "x" + std::to_string(n));
  }
  q = ((q % 4) + 4) % 4;
  std::vector<double> out(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t sr = r, sc = c;
      switch (q) {
        case 1: sr = c; sc = n - 1 - r; break;
        case 2: sr = n - 1 - r; sc = n - 1 - c; break;
        case 3: sr = n - 1 - c; sc = r; break;
        default: break;
      }
      out[r * n + c] = image[sr * n + sc];
    }
  }
  return out;
}

Tensor rotate_quarter(const Tensor& image, int q) {
  if (image.rank() != 2 || image.shape()[0] != image.shape()[1]) {
    throw ShapeError("rotate_quarter needs a square image");
  }
  const std::size_t n = image.shape()[0];
  return Tensor({n, n}, rotate_quarter(image.values(), n, q));
}

Dataset sample_target_set(const Dataset& target, std::size_t n, std::uint64_t seed, bool balanced) {
  if (n == 0) throw UsageError("target sample count must be positive");
  if (n > target.size()) {
    throw UsageError("cannot draw " + std::to_string(n) + " samples from a set of " +
                     std::to_string(target.size()));
  }
  Rng rng(derive_seed(seed, {stream::kSample}));
  std::vector<std::size_t> order(target.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(std::span<std::size_t>(order), rng);
  if (!balanced) {
    order.resize(n);
    return target.subset(order, DatasetRole::target_samples);
  }
  const std::size_t classes = target.num_classes();
  std::vector<std::size_t> quota(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) ++quota[c];
  std::vector<std::size_t> picked;
  for (std::size_t i : order) {
    auto& q = quota[static_cast<std::size_t>(target.labels()[i])];
    if (q > 0) {
      --q;
      picked.push_back(i);
    }
  }
  if (picked.size() != n) throw UsageError("not enough samples per class for balanced sampling");
  return target.subset(picked, DatasetRole::target_samples);
}

}  // namespace driftlab
