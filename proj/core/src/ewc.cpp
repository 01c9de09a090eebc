#include "driftlab/ewc.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

std::string_view to_string(FisherLabelMode mode) noexcept {
  return mode == FisherLabelMode::true_label ? "true" : "sampled";
}

FisherLabelMode parse_fisher_label_mode(std::string_view name) {
  if (name == "true") return FisherLabelMode::true_label;
  if (name == "sampled") return FisherLabelMode::sampled;
  throw UsageError("unknown fisher label mode '" + std::string(name) + "' (expected true or sampled)");
}

void FisherDiagonal::validate() const {
  auto v = values.values();
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!std::isfinite(v[j]) || v[j] < 0.0) {
      throw NumericError("fisher entry " + std::to_string(j) + " is negative or non-finite");
    }
  }
}

void EwcConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be a finite value >= 0");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (steps == 0) throw UsageError("steps must be positive");
  if (batch_size == 0) throw UsageError("batch size must be positive");
}

FisherDiagonal compute_fisher(const Network& net, const Dataset& source, std::size_t n_samples,
                              std::uint64_t seed, FisherLabelMode mode) {
  if (n_samples == 0) throw UsageError("fisher needs at least one sample");
  if (n_samples > source.size()) {
    throw UsageError("fisher sample count " + std::to_string(n_samples) + " exceeds dataset size " +
                     std::to_string(source.size()));
  }
  std::vector<std::size_t> order(source.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, {stream::kFisher, 0}));
  shuffle(std::span<std::size_t>(order), pick);
  order.resize(n_samples);

  FisherDiagonal fisher{ParamSet(net.params().layers()), n_samples, source.fingerprint()};
  auto acc = fisher.values.values();
  Rng label_rng(derive_seed(seed, {stream::kFisher, 1}));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t idx[] = {order[s]};
    Tensor x = source.batch(idx);
    ForwardTrace trace = forward_trace(net, x);
    if (!trace.output().all_finite()) {
      throw NumericError("non-finite logits while estimating the fisher (sample " +
                         std::to_string(order[s]) + ")");
    }
    int label = source.labels()[order[s]];
    if (mode == FisherLabelMode::sampled) {
      Tensor p = softmax(trace.output());
      const double u = label_rng.uniform();
      double cdf = 0.0;
      label = static_cast<int>(p.cols() - 1);
      for (std::size_t c = 0; c < p.cols(); ++c) {
        cdf += p(0, c);
        if (u < cdf) {
          label = static_cast<int>(c);
          break;
        }
      }
    }
    const int labels[] = {label};
    // The score is -d(CE)/d(theta); its square is sign-free.
    BackpropResult bp = backprop(net, trace, cross_entropy_grad(trace.output(), labels));
    auto g = bp.grads.values();
    for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j] * g[j];
  }
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (double& f : acc) f *= inv;
  fisher.validate();
  return fisher;
}

namespace {

void check_ewc_inputs(const ParamSet& params, const AnchorParams& anchor, const FisherDiagonal& fisher) {
  require_congruent(params, anchor.params(), "ewc anchor");
  require_congruent(params, fisher.values, "ewc fisher");
}

}  // namespace

double ewc_penalty(const ParamSet& params, const AnchorParams& anchor, const FisherDiagonal& fisher,
                   double lambda) {
  check_ewc_inputs(params, anchor, fisher);
  auto theta = params.values();
  auto star = anchor.params().values();
  auto f = fisher.values.values();
  double sum = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double d = theta[j] - star[j];
    sum += f[j] * d * d;
  }
  return lambda * sum;
}

GradientSet ewc_gradient(const ParamSet& params, const AnchorParams& anchor, const FisherDiagonal& fisher,
                         double lambda) {
  check_ewc_inputs(params, anchor, fisher);
  GradientSet g(params.layers());
  auto out = g.values();
  auto theta = params.values();
  auto star = anchor.params().values();
  auto f = fisher.values.values();
  for (std::size_t j = 0; j < theta.size(); ++j) out[j] = 2.0 * lambda * f[j] * (theta[j] - star[j]);
  return g;
}

void regularized_update(ParamSet& params, const GradientSet& loss_grad, const AnchorParams& anchor,
                        const FisherDiagonal& fisher, double lambda, double learning_rate) {
  if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
  check_ewc_inputs(params, anchor, fisher);
  require_congruent(params, loss_grad, "regularized_update");
  require_finite(loss_grad.values(), "loss gradient");
  auto theta = params.values();
  auto star = anchor.params().values();
  auto f = fisher.values.values();
  auto g = loss_grad.values();
  std::vector<double> next(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double pull = 2.0 * lambda * f[j];
    if (pull == 0.0) {
      next[j] = theta[j] - learning_rate * g[j];
    } else if (learning_rate * pull <= 1.0) {
      next[j] = theta[j] - learning_rate * (g[j] + pull * (theta[j] - star[j]));
    } else {
      next[j] = star[j] - learning_rate * g[j];
    }
  }
  require_finite(next, "regularized update");
  std::copy(next.begin(), next.end(), theta.begin());
}

double regularized_step(TrainLoopState& state, const Tensor& batch, std::span<const int> labels,
                        const AnchorParams& anchor, const FisherDiagonal& fisher, double lambda) {
  auto [loss, grads] = backward(state.net, batch, labels);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss at step " + std::to_string(state.step));
  regularized_update(state.net.params(), grads, anchor, fisher, lambda, state.learning_rate);
  ++state.step;
  return loss;
}

}  // namespace driftlab
