#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/dira.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/network.hpp"

namespace driftlab {

/// Number of rotation classes of the auxiliary head (0, 90, 180, 270 degrees).
inline constexpr std::size_t kRotationClasses = 4;

/// Y-structured model: a shared trunk feeding a main classification head and a
/// rotation head.
///
/// The trunk holds base layers 1..k, the main head layers k+1..K. Parameters
/// that adaptation may change (trunk then aux head) are exposed as one
/// ParamSet so the EWC machinery applies to them unchanged.
class YModel {
 public:
  /// Throws ShapeError unless the trunk output feeds both heads and the aux head has 4 outputs.
  YModel(Network trunk, Network main_head, Network aux_head);

  const Network& trunk() const noexcept { return trunk_; }
  const Network& main_head() const noexcept { return main_head_; }
  const Network& aux_head() const noexcept { return aux_head_; }
  Network& trunk() noexcept { return trunk_; }
  Network& main_head() noexcept { return main_head_; }
  Network& aux_head() noexcept { return aux_head_; }

  std::size_t split_k() const noexcept { return trunk_.depth(); }
  /// Depth K of the main path.
  std::size_t depth() const noexcept { return trunk_.depth() + main_head_.depth(); }
  std::size_t input_dim() const noexcept { return trunk_.input_dim(); }
  std::size_t num_classes() const noexcept { return main_head_.output_dim(); }

  /// Trunk followed by the main head as a single network.
  Network main_path() const;

  /// Trunk layers followed by aux-head layers.
  ParamSet adaptable_params() const;
  void set_adaptable_params(const ParamSet& params);

  Tensor main_logits(const Tensor& batch) const;
  Tensor aux_logits(const Tensor& batch) const;

  friend bool operator==(const YModel&, const YModel&) = default;

 private:
  Network trunk_;
  Network main_head_;
  Network aux_head_;
};

/// Splits `base` after layer k (1 <= k < K) and attaches a fresh aux head
/// (one ReLU hidden layer as wide as the trunk output, then 4 logits).
YModel build_y_model(const Network& base, std::size_t k, std::uint64_t seed);

struct RotationBatch {
  /// Rows are flattened rotated images.
  Tensor images;
  /// Quarter turns applied to each row.
  std::vector<int> rot_labels;
  std::size_t image_size = 0;
};

/// Rotates every image by a uniformly drawn number of quarter turns.
/// `images` is B x H x W; throws ShapeError when H != W.
RotationBatch make_rotation_batch(const Tensor& images, std::uint64_t seed);
/// Same for B flattened S x S images stored as rows.
RotationBatch make_rotation_batch(const Tensor& rows, std::size_t image_size, std::uint64_t seed);

struct JointLossConfig {
  /// Weight of the rotation loss.
  double beta = 1.0;
  void validate() const;
};

struct JointTrainConfig {
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// SGD on L_main(clean batch) + beta * L_aux(rotated copy of the same batch) over all parameters.
YModel pretrain_joint(YModel y, const Dataset& source_train, const JointLossConfig& loss, const JointTrainConfig& cfg,
                      const std::function<void(std::size_t epoch, double loss)>& on_epoch = {});

/// Main-head accuracy on labeled data.
double main_accuracy(const YModel& y, const Dataset& data);
/// Aux-head accuracy on the images rotated by make_rotation_batch(seed).
double rotation_accuracy(const YModel& y, const ImageSet& images, std::uint64_t seed);

/// Which objective the DIRA-SS Fisher is taken over.
enum class SsFisherMode {
  joint,      ///< main + beta * aux
  main_only,  ///< main loss only
};

std::string_view to_string(SsFisherMode mode) noexcept;
SsFisherMode parse_ss_fisher_mode(std::string_view name);

/// Per-sample squared gradients over the trunk and aux-head parameters
/// (layout of adaptable_params()).
FisherDiagonal compute_fisher_ss(const YModel& y, const Dataset& source, std::size_t n_samples, std::uint64_t seed,
                                 const JointLossConfig& loss, SsFisherMode mode = SsFisherMode::joint);

struct SelfSupervisedAdaptation {
  AdaptationReport report;
  YModel model;
};

/// Retrains trunk + aux head on rotation batches built from unlabeled target
/// images under the EWC penalty, keeping the main head bit-frozen.
/// A_T is rotation accuracy on freshly rotated samples (fixed evaluation
/// seed); A_0 is main-head accuracy on the source test split.
SelfSupervisedAdaptation adapt_self_supervised(const YModel& y, const AnchorParams& anchor,
                                               const FisherDiagonal& fisher, const ImageSet& samples,
                                               const Dataset& source_test, const HyperGrid& grid,
                                               const CfasConfig& cfas_cfg, std::uint64_t seed,
                                               AdaptOptions options = {});

}  // namespace driftlab
