#include "driftlab/params.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>

#include "driftlab/errors.hpp"

namespace driftlab {

ParamSet::ParamSet(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  std::size_t offset = 0;
  offsets_.reserve(layers_.size());
  for (const auto& shape : layers_) {
    if (shape.in_dim == 0 || shape.out_dim == 0) throw ShapeError("layer dimensions must be positive");
    offsets_.push_back(offset);
    offset += shape.param_count();
  }
  values_.assign(offset, 0.0);
}

std::span<double> ParamSet::layer(std::size_t l) noexcept {
  return std::span<double>(values_).subspan(offsets_[l], layers_[l].param_count());
}

std::span<const double> ParamSet::layer(std::size_t l) const noexcept {
  return std::span<const double>(values_).subspan(offsets_[l], layers_[l].param_count());
}

std::span<double> ParamSet::weights(std::size_t l) noexcept {
  return layer(l).first(layers_[l].weight_count());
}

std::span<const double> ParamSet::weights(std::size_t l) const noexcept {
  return layer(l).first(layers_[l].weight_count());
}

std::span<double> ParamSet::bias(std::size_t l) noexcept {
  return layer(l).subspan(layers_[l].weight_count());
}

std::span<const double> ParamSet::bias(std::size_t l) const noexcept {
  return layer(l).subspan(layers_[l].weight_count());
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamSet ParamSet::concat(const ParamSet& front, const ParamSet& back) {
  std::vector<LayerShape> layers = front.layers_;
  layers.insert(layers.end(), back.layers_.begin(), back.layers_.end());
  ParamSet out(std::move(layers));
  std::copy(front.values_.begin(), front.values_.end(), out.values_.begin());
  std::copy(back.values_.begin(), back.values_.end(), out.values_.begin() + front.size());
  return out;
}

std::pair<ParamSet, ParamSet> ParamSet::split(std::size_t count) const {
  if (count > layers_.size()) throw ShapeError("split point beyond the last layer");
  ParamSet front({layers_.begin(), layers_.begin() + count});
  ParamSet back({layers_.begin() + count, layers_.end()});
  std::copy_n(values_.begin(), front.size(), front.values_.begin());
  std::copy(values_.begin() + front.size(), values_.end(), back.values_.begin());
  return {std::move(front), std::move(back)};
}

void require_congruent(const ParamSet& a, const ParamSet& b, const char* context) {
  if (a.congruent(b)) return;
  throw ShapeError(std::string(context) + ": parameter sets differ in layout (" +
                   std::to_string(a.layer_count()) + " layers / " + std::to_string(a.size()) +
                   " values vs " + std::to_string(b.layer_count()) + " layers / " +
                   std::to_string(b.size()) + " values)");
}

namespace {

struct DigestDeleter {
  void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("failed to initialise SHA-256");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  void update_u64(std::uint64_t v) {
    std::array<unsigned char, 8> le{};
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(v >> (8 * i));
    update(le.data(), le.size());
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kDigits[md[i] >> 4]);
      out.push_back(kDigits[md[i] & 0xf]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, DigestDeleter> ctx_;
};

}  // namespace

std::string fingerprint(const ParamSet& params) {
  Sha256 sha;
  sha.update_u64(params.layer_count());
  for (const auto& shape : params.layers()) {
    sha.update_u64(shape.in_dim);
    sha.update_u64(shape.out_dim);
  }
  for (double v : params.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    sha.update_u64(bits);
  }
  return sha.hex();
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  Sha256 sha;
  sha.update(bytes.data(), bytes.size());
  return sha.hex();
}

}  // namespace driftlab
