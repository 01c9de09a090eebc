#include "driftlab/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

std::string_view to_string(Activation a) noexcept {
  return a == Activation::relu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw UsageError("unknown activation '" + std::string(name) + "' (expected relu or identity)");
}

std::vector<LayerShape> shapes_of(std::span<const LayerSpec> layers) {
  std::vector<LayerShape> shapes;
  shapes.reserve(layers.size());
  for (const auto& l : layers) shapes.push_back(l.shape());
  return shapes;
}

namespace {

void check_chain(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ShapeError("network needs at least one layer");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].in_dim != layers[l - 1].out_dim) {
      throw ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(layers[l].in_dim) +
                       " inputs but layer " + std::to_string(l - 1) + " produces " +
                       std::to_string(layers[l - 1].out_dim));
    }
  }
}

// out = act(x W^T + b). Weights are stored out x in; a transposed copy turns
// the inner loop into an order-preserving axpy over output units.
Tensor dense_forward(const LayerSpec& spec, std::span<const double> weights, std::span<const double> bias,
                     const Tensor& x) {
  const std::size_t in = spec.in_dim;
  const std::size_t out = spec.out_dim;
  std::vector<double> wt(in * out);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = weights[o * in + i];
  }
  Tensor y = Tensor::matrix(x.rows(), out);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto xr = x.row(b);
    auto yr = y.row(b);
    std::copy(bias.begin(), bias.end(), yr.begin());
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* w = wt.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * w[o];
    }
    if (spec.activation == Activation::relu) {
      for (double& v : yr) v = v > 0.0 ? v : 0.0;
    }
  }
  return y;
}

}  // namespace

Network::Network(std::vector<LayerSpec> layers, std::uint64_t seed)
    : layers_(std::move(layers)), seed_(seed) {
  check_chain(layers_);
  params_ = ParamSet(shapes_of(layers_));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layers_[l].in_dim + layers_[l].out_dim));
    Rng rng(derive_seed(seed_, {stream::kInit, l}));
    for (double& w : params_.weights(l)) w = rng.uniform(-limit, limit);
  }
}

Network::Network(std::vector<LayerSpec> layers, ParamSet params, std::uint64_t seed)
    : layers_(std::move(layers)), params_(std::move(params)), seed_(seed) {
  check_chain(layers_);
  if (params_.layers() != shapes_of(layers_)) {
    throw ShapeError("parameter blocks do not match the layer specification");
  }
}

Network Network::classifier(std::size_t input_dim, std::span<const std::size_t> hidden,
                            std::size_t classes, std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  std::size_t prev = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back({prev, width, Activation::relu});
    prev = width;
  }
  layers.push_back({prev, classes, Activation::identity});
  return Network(std::move(layers), seed);
}

ForwardTrace forward_trace(const Network& net, const Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != net.input_dim()) {
    throw ShapeError("batch width " + std::to_string(batch.rank() == 2 ? batch.cols() : 0) +
                     " does not match network input dimension " + std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  trace.activations.reserve(net.depth() + 1);
  trace.activations.push_back(batch);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    trace.activations.push_back(dense_forward(net.layers()[l], net.params().weights(l),
                                              net.params().bias(l), trace.activations.back()));
  }
  return trace;
}

Tensor forward(const Network& net, const Tensor& batch) {
  return std::move(forward_trace(net, batch).activations.back());
}

BackpropResult backprop(const Network& net, const ForwardTrace& trace, const Tensor& output_grad) {
  const std::size_t batch = output_grad.rows();
  if (output_grad.cols() != net.output_dim() || trace.activations.size() != net.depth() + 1) {
    throw ShapeError("output gradient does not match the forward trace");
  }
  GradientSet grads(net.params().layers());
  Tensor delta = output_grad;
  for (std::size_t l = net.depth(); l-- > 0;) {
    const LayerSpec& spec = net.layers()[l];
    const Tensor& y = trace.activations[l + 1];
    const Tensor& x = trace.activations[l];
    if (spec.activation == Activation::relu) {
      auto d = delta.values();
      auto yv = y.values();
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!(yv[k] > 0.0)) d[k] = 0.0;
      }
    }
    auto gw = grads.weights(l);
    auto gb = grads.bias(l);
    auto w = net.params().weights(l);
    Tensor dx = Tensor::matrix(batch, spec.in_dim);
    for (std::size_t b = 0; b < batch; ++b) {
      auto xr = x.row(b);
      auto dr = delta.row(b);
      auto dxr = dx.row(b);
      for (std::size_t o = 0; o < spec.out_dim; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwo = gw.data() + o * spec.in_dim;
        const double* wo = w.data() + o * spec.in_dim;
        for (std::size_t i = 0; i < spec.in_dim; ++i) gwo[i] += d * xr[i];
        for (std::size_t i = 0; i < spec.in_dim; ++i) dxr[i] += d * wo[i];
      }
    }
    delta = std::move(dx);
  }
  return {std::move(grads), std::move(delta)};
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows()) + " rows of logits");
  }
  const auto classes = static_cast<long long>(logits.cols());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || labels[b] >= classes) {
      throw LabelError("label " + std::to_string(labels[b]) + " at row " + std::to_string(b) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  for (std::size_t b = 0; b < p.rows(); ++b) {
    auto r = p.row(b);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  return p;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto r = logits.row(b);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - m);
    total += std::log(z) - (r[static_cast<std::size_t>(labels[b])] - m);
  }
  return total / static_cast<double>(logits.rows());
}

Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Tensor g = softmax(logits);
  const double scale = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t b = 0; b < g.rows(); ++b) {
    auto r = g.row(b);
    r[static_cast<std::size_t>(labels[b])] -= 1.0;
    for (double& v : r) v *= scale;
  }
  return g;
}

LossAndGrad backward(const Network& net, const Tensor& batch, std::span<const int> labels) {
  ForwardTrace trace = forward_trace(net, batch);
  const double loss = cross_entropy(trace.output(), labels);
  BackpropResult bp = backprop(net, trace, cross_entropy_grad(trace.output(), labels));
  return {loss, std::move(bp.grads)};
}

std::size_t argmax(std::span<const double> row) noexcept {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

std::vector<int> predict(const Network& net, const Tensor& batch) {
  Tensor logits = forward(net, batch);
  std::vector<int> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) out[b] = static_cast<int>(argmax(logits.row(b)));
  return out;
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw UsageError("accuracy of an empty dataset");
  const auto predicted = predict(net, data.batch());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += predicted[i] == data.labels()[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw NumericError("non-finite " + std::string(what) + " at parameter " + std::to_string(k));
    }
  }
}

void sgd_step(TrainLoopState& state, const GradientSet& grads) {
  require_congruent(state.net.params(), grads, "sgd_step");
  require_finite(grads.values(), "gradient");
  auto theta = state.net.params().values();
  auto g = grads.values();
  const double eta = state.learning_rate;
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= eta * g[j];
  ++state.step;
}

BatchSampler::BatchSampler(std::size_t count, std::size_t batch_size, std::uint64_t seed)
    : order_(count), batch_size_(batch_size), seed_(seed) {
  if (count == 0) throw UsageError("cannot sample batches from an empty set");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  reshuffle();
}

void BatchSampler::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  Rng rng(derive_seed(seed_, {stream::kShuffle, epoch_}));
  shuffle(std::span<std::size_t>(order_), rng);
  cursor_ = 0;
}

std::span<const std::size_t> BatchSampler::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  std::span<const std::size_t> out(order_.data() + cursor_, n);
  cursor_ += n;
  return out;
}

Network train(Network net, const Dataset& data, const TrainConfig& cfg,
              const std::function<void(std::size_t, double)>& on_epoch) {
  if (cfg.epochs == 0) throw UsageError("training needs at least one epoch");
  if (!(cfg.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  TrainLoopState state{std::move(net), cfg.learning_rate};
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < sampler.batches_per_epoch(); ++k) {
      auto idx = sampler.next();
      auto [loss, grads] = backward(state.net, data.batch(idx), data.labels_at(idx));
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(state.step));
      }
      sgd_step(state, grads);
      loss_sum += loss;
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(sampler.batches_per_epoch()));
  }
  return std::move(state.net);
}

}  // namespace driftlab
