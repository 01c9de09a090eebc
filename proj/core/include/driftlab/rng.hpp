#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace driftlab {

/// Counter-based SplitMix64 stream. The bit sequence depends only on the seed,
/// so results are reproducible across compilers and standard libraries
/// (unlike the std:: distributions, whose algorithms are unspecified).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n). n must be positive.
  std::size_t index(std::size_t n) noexcept;
  /// Standard normal deviate (Box-Muller, one value per call).
  double normal() noexcept;

 private:
  std::uint64_t state_;
};

/// Mixes a root seed with a path of stream identifiers into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

/// Stream tags used with derive_seed. Values are part of the reproducibility contract.
namespace stream {
inline constexpr std::uint64_t kInit = 0x696e6974;         // "init"
inline constexpr std::uint64_t kShuffle = 0x73687566;      // "shuf"
inline constexpr std::uint64_t kGlyph = 0x676c7970;        // "glyp"
inline constexpr std::uint64_t kSplit = 0x73706c74;        // "splt"
inline constexpr std::uint64_t kCorrupt = 0x63727074;      // "crpt"
inline constexpr std::uint64_t kSample = 0x736d706c;       // "smpl"
inline constexpr std::uint64_t kFisher = 0x66697368;       // "fish"
inline constexpr std::uint64_t kCandidate = 0x63616e64;    // "cand"
inline constexpr std::uint64_t kRotation = 0x726f7461;     // "rota"
inline constexpr std::uint64_t kAuxInit = 0x61757869;      // "auxi"
inline constexpr std::uint64_t kEval = 0x6576616c;         // "eval"
}  // namespace stream

/// Fisher-Yates shuffle driven by an Rng.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) noexcept {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace driftlab
