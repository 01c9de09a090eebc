#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "driftlab/dataset.hpp"
#include "driftlab/network.hpp"
#include "driftlab/params.hpp"

namespace driftlab {

/// Which label the per-sample score is taken at when estimating the Fisher.
enum class FisherLabelMode {
  true_label,  ///< ground-truth label (empirical Fisher)
  sampled,     ///< label drawn from the model's predictive distribution
};

std::string_view to_string(FisherLabelMode mode) noexcept;
FisherLabelMode parse_fisher_label_mode(std::string_view name);

/// Diagonal Fisher information of the source model, one entry per parameter.
struct FisherDiagonal {
  ParamSet values;
  std::size_t sample_count = 0;
  std::string source_fingerprint;

  /// Throws NumericError on a negative or non-finite entry.
  void validate() const;
};

/// Frozen copy of the source parameters the penalty pulls towards.
class AnchorParams {
 public:
  explicit AnchorParams(ParamSet params) : params_(std::move(params)) {}
  const ParamSet& params() const noexcept { return params_; }

 private:
  ParamSet params_;
};

struct EwcConfig {
  double lambda = 0.0;
  double learning_rate = 0.01;
  std::size_t steps = 100;
  std::size_t batch_size = 32;

  void validate() const;
};

/// F_j = mean over n sampled (x, y) of (d log p(y|x) / d theta_j)^2, one sample at a time.
/// Samples are drawn without replacement from `source`.
FisherDiagonal compute_fisher(const Network& net, const Dataset& source, std::size_t n_samples,
                              std::uint64_t seed, FisherLabelMode mode = FisherLabelMode::true_label);

/// sum_j lambda * F_j * (theta_j - anchor_j)^2
double ewc_penalty(const ParamSet& params, const AnchorParams& anchor, const FisherDiagonal& fisher,
                   double lambda);

/// 2 * lambda * F_j * (theta_j - anchor_j), the exact derivative of ewc_penalty.
GradientSet ewc_gradient(const ParamSet& params, const AnchorParams& anchor, const FisherDiagonal& fisher,
                         double lambda);

/// One descent step on L_T + penalty: theta <- theta - eta * (g_loss + g_penalty).
///
/// Where eta * 2 * lambda * F_j > 1 the explicit step would overshoot the
/// anchor (and diverge once it exceeds 2); the penalty contribution is then
/// capped at a full pull back to the anchor, i.e. theta_j <- anchor_j - eta * g_loss_j.
/// Throws NumericError before touching `params` if the update is not finite.
void regularized_update(ParamSet& params, const GradientSet& loss_grad, const AnchorParams& anchor,
                        const FisherDiagonal& fisher, double lambda, double learning_rate);

/// Backward pass on (batch, labels) followed by regularized_update. Returns the batch loss.
double regularized_step(TrainLoopState& state, const Tensor& batch, std::span<const int> labels,
                        const AnchorParams& anchor, const FisherDiagonal& fisher, double lambda);

}  // namespace driftlab
