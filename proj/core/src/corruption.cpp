#include <algorithm>
#include <array>
#include <charconv>
#include <string>

#include "driftlab/data.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

constexpr std::array<Corruption, 6> kCorruptions = {
    Corruption::gaussian_noise, Corruption::impulse_noise, Corruption::blur,
    Corruption::contrast,       Corruption::brightness,    Corruption::pixelate};

// Severity tables, indexed by severity - 1.
constexpr std::array<double, 5> kNoiseSigma = {0.05, 0.10, 0.15, 0.20, 0.30};
constexpr std::array<double, 5> kImpulseFraction = {0.01, 0.03, 0.05, 0.10, 0.15};
constexpr std::array<double, 5> kContrastFactor = {0.75, 0.60, 0.45, 0.30, 0.15};
constexpr std::array<double, 5> kBrightnessOffset = {0.10, 0.20, 0.30, 0.40, 0.50};
constexpr std::array<std::size_t, 5> kPixelBlock = {2, 2, 4, 4, 8};

// Mirror index without repeating the edge pixel: -1 -> 1, n -> n - 2.
std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

void mean_filter3(std::span<double> img, std::size_t n) {
  std::vector<double> src(img.begin(), img.end());
  const long sn = static_cast<long>(n);
  for (long r = 0; r < sn; ++r) {
    for (long c = 0; c < sn; ++c) {
      double sum = 0.0;
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) sum += src[reflect(r + dr, sn) * n + reflect(c + dc, sn)];
      }
      img[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c)] = sum / 9.0;
    }
  }
}

void pixelate(std::span<double> img, std::size_t n, std::size_t block) {
  for (std::size_t r0 = 0; r0 < n; r0 += block) {
    for (std::size_t c0 = 0; c0 < n; c0 += block) {
      const std::size_t r1 = std::min(n, r0 + block);
      const std::size_t c1 = std::min(n, c0 + block);
      double sum = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) sum += img[r * n + c];
      const double mean = sum / static_cast<double>((r1 - r0) * (c1 - c0));
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) img[r * n + c] = mean;
    }
  }
}

}  // namespace

std::string_view to_string(Corruption c) noexcept {
  switch (c) {
    case Corruption::none: return "none";
    case Corruption::gaussian_noise: return "gaussian_noise";
    case Corruption::impulse_noise: return "impulse_noise";
    case Corruption::blur: return "blur";
    case Corruption::contrast: return "contrast";
    case Corruption::brightness: return "brightness";
    case Corruption::pixelate: return "pixelate";
  }
  return "none";
}

Corruption parse_corruption(std::string_view name) {
  if (name == "none") return Corruption::none;
  for (Corruption c : kCorruptions) {
    if (to_string(c) == name) return c;
  }
  std::string valid = "none";
  for (Corruption c : kCorruptions) valid += ", " + std::string(to_string(c));
  throw UsageError("unknown corruption '" + std::string(name) + "' (valid: " + valid + ")");
}

std::span<const Corruption> all_corruptions() noexcept { return kCorruptions; }

std::string DomainSpec::name() const {
  if (corruption == Corruption::none) return "none";
  return std::string(to_string(corruption)) + ":" + std::to_string(severity);
}

DomainSpec DomainSpec::parse(std::string_view text) {
  DomainSpec spec;
  const auto colon = text.find(':');
  spec.corruption = parse_corruption(text.substr(0, colon));
  if (colon != std::string_view::npos) {
    const auto digits = text.substr(colon + 1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      throw UsageError("bad severity in domain '" + std::string(text) + "'");
    }
    spec.severity = value;
  }
  spec.validate();
  return spec;
}

void DomainSpec::validate() const {
  if (corruption != Corruption::none && (severity < 1 || severity > 5)) {
    throw UsageError("severity " + std::to_string(severity) + " outside [1, 5]");
  }
}

void corrupt_image(std::span<double> img, std::size_t n, const DomainSpec& domain, std::uint64_t image_seed) {
  domain.validate();
  if (domain.corruption == Corruption::none) return;
  const auto level = static_cast<std::size_t>(domain.severity - 1);
  Rng rng(image_seed);
  switch (domain.corruption) {
    case Corruption::gaussian_noise:
      for (double& v : img) v += kNoiseSigma[level] * rng.normal();
      break;
    case Corruption::impulse_noise:
      for (double& v : img) {
        const bool hit = rng.uniform() < kImpulseFraction[level];
        const bool salt = rng.uniform() < 0.5;
        if (hit) v = salt ? 1.0 : 0.0;
      }
      break;
    case Corruption::blur:
      for (int k = 0; k < domain.severity; ++k) mean_filter3(img, n);
      break;
    case Corruption::contrast: {
      double sum = 0.0;
      for (double v : img) sum += v;
      const double mean = sum / static_cast<double>(img.size());
      for (double& v : img) v = (v - mean) * kContrastFactor[level] + mean;
      break;
    }
    case Corruption::brightness:
      for (double& v : img) v += kBrightnessOffset[level];
      break;
    case Corruption::pixelate:
      pixelate(img, n, kPixelBlock[level]);
      break;
    case Corruption::none:
      break;
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
}

Dataset corrupt(const Dataset& data, const DomainSpec& domain, std::uint64_t seed) {
  domain.validate();
  if (domain.corruption == Corruption::none) return data;
  std::vector<double> pixels(data.pixels().begin(), data.pixels().end());
  const std::size_t per = data.pixels_per_image();
  for (std::size_t i = 0; i < data.size(); ++i) {
    corrupt_image(std::span<double>(pixels).subspan(i * per, per), data.image_size(), domain,
                  derive_seed(seed, {stream::kCorrupt, i}));
  }
  return Dataset(data.image_size(), data.num_classes(), std::move(pixels),
                 std::vector<int>(data.labels().begin(), data.labels().end()), DatasetRole::target);
}

}  // namespace driftlab
