#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/params.hpp"
#include "driftlab/tensor.hpp"

namespace driftlab {

enum class Activation { relu, identity };

std::string_view to_string(Activation a) noexcept;
/// Throws UsageError on an unknown name.
Activation parse_activation(std::string_view name);

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::relu;

  LayerShape shape() const noexcept { return {in_dim, out_dim}; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Stack of dense layers and their parameters.
class Network {
 public:
  /// Glorot-uniform weights from a per-layer stream of `seed`, zero biases.
  Network(std::vector<LayerSpec> layers, std::uint64_t seed);
  /// Restores a network from explicit parameters.
  Network(std::vector<LayerSpec> layers, ParamSet params, std::uint64_t seed);

  /// input_dim -> hidden[0] -> ... -> classes; ReLU on hidden layers, identity on the logits.
  static Network classifier(std::size_t input_dim, std::span<const std::size_t> hidden,
                            std::size_t classes, std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept { return layers_.front().in_dim; }
  std::size_t output_dim() const noexcept { return layers_.back().out_dim; }
  std::uint64_t seed() const noexcept { return seed_; }

  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<LayerSpec> layers_;
  ParamSet params_;
  std::uint64_t seed_;
};

/// Layer shapes of a spec list.
std::vector<LayerShape> shapes_of(std::span<const LayerSpec> layers);

/// Raw logits for a B x D batch.
Tensor forward(const Network& net, const Tensor& batch);

/// Post-activation outputs of every layer; activations[0] is the input.
struct ForwardTrace {
  std::vector<Tensor> activations;
  const Tensor& output() const noexcept { return activations.back(); }
};

ForwardTrace forward_trace(const Network& net, const Tensor& batch);

struct BackpropResult {
  GradientSet grads;
  Tensor input_grad;
};

/// Backpropagates an upstream gradient on the network output through a recorded trace.
BackpropResult backprop(const Network& net, const ForwardTrace& trace, const Tensor& output_grad);

/// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// d(mean cross-entropy)/d(logits) = (softmax - onehot) / B.
Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax computed with max subtraction.
Tensor softmax(const Tensor& logits);

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Mean cross-entropy and its exact gradient with respect to every parameter.
LossAndGrad backward(const Network& net, const Tensor& batch, std::span<const int> labels);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row) noexcept;

std::vector<int> predict(const Network& net, const Tensor& batch);

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const Network& net, const Dataset& data);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

struct TrainLoopState {
  Network net;
  double learning_rate;
  std::uint64_t step = 0;
};

/// theta <- theta - eta * g. Throws NumericError on a non-finite gradient (params untouched).
void sgd_step(TrainLoopState& state, const GradientSet& grads);

/// Yields mini-batches of sample indices, reshuffled each epoch from its own stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::size_t batch_size, std::uint64_t seed);

  /// Next mini-batch. The last batch of an epoch may be short.
  std::span<const std::size_t> next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batches_per_epoch() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// Plain mini-batch SGD on the mean cross-entropy. `on_epoch` receives the epoch's mean loss.
Network train(Network net, const Dataset& data, const TrainConfig& cfg,
              const std::function<void(std::size_t epoch, double loss)>& on_epoch = {});

}  // namespace driftlab
