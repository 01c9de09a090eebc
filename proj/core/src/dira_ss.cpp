#include "driftlab/dira_ss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "driftlab/data.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

YModel::YModel(Network trunk, Network main_head, Network aux_head)
    : trunk_(std::move(trunk)), main_head_(std::move(main_head)), aux_head_(std::move(aux_head)) {
  if (main_head_.input_dim() != trunk_.output_dim() || aux_head_.input_dim() != trunk_.output_dim()) {
    throw ShapeError("both heads must read the trunk output of width " + std::to_string(trunk_.output_dim()));
  }
  if (aux_head_.output_dim() != kRotationClasses) {
    throw ShapeError("aux head must produce " + std::to_string(kRotationClasses) + " rotation logits");
  }
}

Network YModel::main_path() const {
  std::vector<LayerSpec> layers = trunk_.layers();
  layers.insert(layers.end(), main_head_.layers().begin(), main_head_.layers().end());
  return Network(std::move(layers), ParamSet::concat(trunk_.params(), main_head_.params()), trunk_.seed());
}

ParamSet YModel::adaptable_params() const { return ParamSet::concat(trunk_.params(), aux_head_.params()); }

void YModel::set_adaptable_params(const ParamSet& params) {
  require_congruent(params, adaptable_params(), "set_adaptable_params");
  auto [trunk, aux] = params.split(trunk_.depth());
  trunk_.params() = std::move(trunk);
  aux_head_.params() = std::move(aux);
}

Tensor YModel::main_logits(const Tensor& batch) const { return forward(main_head_, forward(trunk_, batch)); }

Tensor YModel::aux_logits(const Tensor& batch) const { return forward(aux_head_, forward(trunk_, batch)); }

YModel build_y_model(const Network& base, std::size_t k, std::uint64_t seed) {
  const std::size_t depth = base.depth();
  if (k < 1 || k >= depth) {
    throw UsageError("split index " + std::to_string(k) + " outside [1, " + std::to_string(depth - 1) + "]");
  }
  const auto& layers = base.layers();
  auto [trunk_params, main_params] = base.params().split(k);
  Network trunk({layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(k)}, std::move(trunk_params),
                base.seed());
  Network main_head({layers.begin() + static_cast<std::ptrdiff_t>(k), layers.end()}, std::move(main_params),
                    base.seed());
  const std::size_t width = trunk.output_dim();
  Network aux({{width, width, Activation::relu}, {width, kRotationClasses, Activation::identity}},
              derive_seed(seed, {stream::kAuxInit}));
  return YModel(std::move(trunk), std::move(main_head), std::move(aux));
}

RotationBatch make_rotation_batch(const Tensor& rows, std::size_t image_size, std::uint64_t seed) {
  if (rows.rank() != 2 || rows.cols() != image_size * image_size) {
    throw ShapeError("rotation batch rows must hold " + std::to_string(image_size) + "x" +
                     std::to_string(image_size) + " images");
  }
  RotationBatch out{Tensor::matrix(rows.rows(), rows.cols()), std::vector<int>(rows.rows()), image_size};
  Rng rng(derive_seed(seed, {stream::kRotation}));
  for (std::size_t b = 0; b < rows.rows(); ++b) {
    const int q = static_cast<int>(rng.index(kRotationClasses));
    out.rot_labels[b] = q;
    auto turned = rotate_quarter(rows.row(b), image_size, q);
    std::copy(turned.begin(), turned.end(), out.images.row(b).begin());
  }
  return out;
}

RotationBatch make_rotation_batch(const Tensor& images, std::uint64_t seed) {
  if (images.rank() != 3 || images.shape()[1] != images.shape()[2]) {
    throw ShapeError("make_rotation_batch needs a B x S x S stack of square images");
  }
  const std::size_t s = images.shape()[1];
  std::vector<double> flat(images.values().begin(), images.values().end());
  return make_rotation_batch(Tensor({images.shape()[0], s * s}, std::move(flat)), s, seed);
}

void JointLossConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw UsageError("beta must be a finite value >= 0");
}

namespace {

struct HeadGrads {
  double loss = 0.0;
  GradientSet trunk;
  GradientSet head;
};

// Loss and gradients of CE(head(trunk(x)), labels) for both the head and the trunk.
HeadGrads head_backward(const Network& trunk, const Network& head, const Tensor& x, std::span<const int> labels) {
  ForwardTrace t_trace = forward_trace(trunk, x);
  ForwardTrace h_trace = forward_trace(head, t_trace.output());
  const double loss = cross_entropy(h_trace.output(), labels);
  BackpropResult h_bp = backprop(head, h_trace, cross_entropy_grad(h_trace.output(), labels));
  BackpropResult t_bp = backprop(trunk, t_trace, h_bp.input_grad);
  return {loss, std::move(t_bp.grads), std::move(h_bp.grads)};
}

void descend(ParamSet& params, const GradientSet& grads, double eta) {
  auto theta = params.values();
  auto g = grads.values();
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= eta * g[j];
}

void add_scaled(GradientSet& into, const GradientSet& from, double scale) {
  auto a = into.values();
  auto b = from.values();
  for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
}

}  // namespace

YModel pretrain_joint(YModel y, const Dataset& source_train, const JointLossConfig& loss, const JointTrainConfig& cfg,
                      const std::function<void(std::size_t, double)>& on_epoch) {
  loss.validate();
  if (cfg.epochs == 0) throw UsageError("joint pretraining needs at least one epoch");
  if (!(cfg.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (source_train.num_classes() != y.num_classes()) {
    throw ShapeError("dataset has " + std::to_string(source_train.num_classes()) + " classes, main head " +
                     std::to_string(y.num_classes()));
  }
  BatchSampler sampler(source_train.size(), cfg.batch_size, cfg.seed);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < sampler.batches_per_epoch(); ++k, ++step) {
      auto idx = sampler.next();
      const Tensor x = source_train.batch(idx);
      HeadGrads main = head_backward(y.trunk(), y.main_head(), x, source_train.labels_at(idx));
      double total = main.loss;
      GradientSet trunk_grad = std::move(main.trunk);
      GradientSet aux_grad;
      if (loss.beta != 0.0) {
        RotationBatch rb = make_rotation_batch(x, source_train.image_size(),
                                               derive_seed(cfg.seed, {stream::kRotation, step}));
        HeadGrads aux = head_backward(y.trunk(), y.aux_head(), rb.images, rb.rot_labels);
        total += loss.beta * aux.loss;
        add_scaled(trunk_grad, aux.trunk, loss.beta);
        aux_grad = std::move(aux.head);
        for (double& v : aux_grad.values()) v *= loss.beta;
      }
      if (!std::isfinite(total)) {
        throw NumericError("non-finite joint loss in epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      require_finite(trunk_grad.values(), "trunk gradient");
      require_finite(main.head.values(), "main-head gradient");
      descend(y.trunk().params(), trunk_grad, cfg.learning_rate);
      descend(y.main_head().params(), main.head, cfg.learning_rate);
      if (loss.beta != 0.0) {
        require_finite(aux_grad.values(), "aux-head gradient");
        descend(y.aux_head().params(), aux_grad, cfg.learning_rate);
      }
      loss_sum += total;
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(sampler.batches_per_epoch()));
  }
  return y;
}

double main_accuracy(const YModel& y, const Dataset& data) { return accuracy(y.main_path(), data); }

double rotation_accuracy(const YModel& y, const ImageSet& images, std::uint64_t seed) {
  RotationBatch rb = make_rotation_batch(images.batch(), images.image_size(), seed);
  Tensor logits = y.aux_logits(rb.images);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    hits += static_cast<int>(argmax(logits.row(b))) == rb.rot_labels[b] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

std::string_view to_string(SsFisherMode mode) noexcept { return mode == SsFisherMode::joint ? "joint" : "main_only"; }

SsFisherMode parse_ss_fisher_mode(std::string_view name) {
  if (name == "joint") return SsFisherMode::joint;
  if (name == "main_only") return SsFisherMode::main_only;
  throw UsageError("unknown dira-ss fisher mode '" + std::string(name) + "' (expected joint or main_only)");
}

FisherDiagonal compute_fisher_ss(const YModel& y, const Dataset& source, std::size_t n_samples, std::uint64_t seed,
                                 const JointLossConfig& loss, SsFisherMode mode) {
  loss.validate();
  if (n_samples == 0 || n_samples > source.size()) {
    throw UsageError("fisher sample count must be in [1, " + std::to_string(source.size()) + "]");
  }
  std::vector<std::size_t> order(source.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, {stream::kFisher, 0}));
  shuffle(std::span<std::size_t>(order), pick);
  order.resize(n_samples);

  FisherDiagonal fisher{ParamSet(y.adaptable_params().layers()), n_samples, source.fingerprint()};
  auto acc = fisher.values.values();

  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t idx[] = {order[s]};
    const Tensor x = source.batch(idx);
    HeadGrads main = head_backward(y.trunk(), y.main_head(), x, source.labels_at(idx));
    GradientSet score = ParamSet::concat(main.trunk, GradientSet(y.aux_head().params().layers()));
    if (mode == SsFisherMode::joint && loss.beta != 0.0) {
      RotationBatch rb = make_rotation_batch(x, source.image_size(), derive_seed(seed, {stream::kFisher, 2, s}));
      HeadGrads aux = head_backward(y.trunk(), y.aux_head(), rb.images, rb.rot_labels);
      add_scaled(score, ParamSet::concat(aux.trunk, aux.head), loss.beta);
    }
    if (!score.all_finite()) throw NumericError("non-finite score while estimating the dira-ss fisher");
    auto g = score.values();
    for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j] * g[j];
  }
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (double& f : acc) f *= inv;
  fisher.validate();
  return fisher;
}

SelfSupervisedAdaptation adapt_self_supervised(const YModel& y, const AnchorParams& anchor,
                                               const FisherDiagonal& fisher, const ImageSet& samples,
                                               const Dataset& source_test, const HyperGrid& grid,
                                               const CfasConfig& cfas_cfg, std::uint64_t seed, AdaptOptions options) {
  const ParamSet start = y.adaptable_params();
  require_congruent(start, anchor.params(), "adapt_self_supervised anchor");
  require_congruent(start, fisher.values, "adapt_self_supervised fisher");
  if (samples.image_size() * samples.image_size() != y.input_dim()) {
    throw ShapeError("target images do not match the model input width");
  }
  if (options.method == "dira") options.method = "dira-ss";
  const std::size_t batch = std::min(grid.batch_size, samples.size());
  const std::uint64_t eval_seed = derive_seed(seed, {stream::kEval});

  auto run = [&](double lambda, double eta, std::uint64_t cseed) {
    YModel model = y;
    ParamSet params = start;
    BatchSampler sampler(samples.size(), batch, cseed);
    for (std::size_t step = 0; step < grid.steps; ++step) {
      auto idx = sampler.next();
      RotationBatch rb = make_rotation_batch(samples.batch(idx), samples.image_size(),
                                             derive_seed(cseed, {stream::kRotation, step}));
      HeadGrads aux = head_backward(model.trunk(), model.aux_head(), rb.images, rb.rot_labels);
      if (!std::isfinite(aux.loss)) throw NumericError("non-finite rotation loss at step " + std::to_string(step));
      regularized_update(params, ParamSet::concat(aux.trunk, aux.head), anchor, fisher, lambda, eta);
      model.set_adaptable_params(params);
    }
    detail::CandidateOutcome out;
    out.target_accuracy = rotation_accuracy(model, samples, eval_seed);
    const Network main = model.main_path();
    out.source_accuracy = accuracy(main, source_test);
    if (options.target_test) out.target_test_accuracy = accuracy(main, *options.target_test);
    out.params = std::move(params);
    return out;
  };

  auto [report, best] = detail::sweep_grid(grid, cfas_cfg, seed, options, run);
  report.n_samples = samples.size();
  report.batch_size = batch;
  YModel model = y;
  model.set_adaptable_params(best);
  return {std::move(report), std::move(model)};
}

}  // namespace driftlab
