#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/network.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/tensor.hpp"

namespace testutil {

using namespace driftlab;

inline Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                           double hi = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng.index(classes));
  return out;
}

/// Labeled S x S images with uniform pixels in [0, 1].
inline Dataset random_dataset(std::size_t n, std::size_t image_size, std::size_t classes, std::uint64_t seed,
                              DatasetRole role = DatasetRole::source_train) {
  Rng rng(seed);
  std::vector<double> px(n * image_size * image_size);
  for (auto& v : px) v = rng.uniform();
  return Dataset(image_size, classes, std::move(px), random_labels(n, classes, seed + 1), role);
}

/// Reference forward pass written straight from the definition
/// (a_out[o] = act(b[o] + sum_i W[o][i] * a_in[i])), one sample at a time.
inline std::vector<double> reference_forward(const Network& net, std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& spec = net.layers()[l];
    auto w = net.params().weights(l);
    auto b = net.params().bias(l);
    std::vector<double> next(spec.out_dim);
    for (std::size_t o = 0; o < spec.out_dim; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < spec.in_dim; ++i) s += w[o * spec.in_dim + i] * a[i];
      next[o] = spec.activation == Activation::relu ? std::max(0.0, s) : s;
    }
    a = std::move(next);
  }
  return a;
}

/// Mean cross-entropy from the reference forward pass, via log-sum-exp.
inline double reference_loss(const Network& net, const Tensor& batch, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto z = reference_forward(net, batch.row(r));
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += m + std::log(s) - z[static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<double>(batch.rows());
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
