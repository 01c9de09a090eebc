#include <vector>

#include <gtest/gtest.h>

#include "driftlab/data.hpp"
#include "driftlab/dira_ss.hpp"
#include "driftlab/errors.hpp"
#include "helpers.hpp"

using namespace driftlab;

namespace {

Network base_net() { return Network::classifier(16, std::vector<std::size_t>{12, 10, 8}, 3, 21); }

ImageSet images_of(const Dataset& d) { return ImageSet(d.image_size(), {d.pixels().begin(), d.pixels().end()}); }

struct SsFixture {
  YModel y;
  FisherDiagonal fisher;
  Dataset source_test;
  ImageSet target;
};

const SsFixture& ss_fixture() {
  static const SsFixture f = [] {
    Dataset src = testutil::random_dataset(60, 4, 3, 1);
    Dataset src_test = testutil::random_dataset(30, 4, 3, 2, DatasetRole::source_test);
    YModel y = build_y_model(base_net(), 2, 5);
    y = pretrain_joint(y, src, {}, JointTrainConfig{3, 0.05, 16, 2});
    FisherDiagonal fisher = compute_fisher_ss(y, src, 40, 3, {});
    ImageSet target = images_of(testutil::random_dataset(20, 4, 3, 9));
    return SsFixture{std::move(y), std::move(fisher), std::move(src_test), std::move(target)};
  }();
  return f;
}

HyperGrid ss_grid() {
  HyperGrid g;
  g.lambdas = {0.0, 100.0};
  g.learning_rates = {0.01, 0.05};
  g.steps = 10;
  g.batch_size = 8;
  return g;
}

}  // namespace

TEST(YModel, SplitBounds) {
  Network net = base_net();  // depth 4
  EXPECT_THROW(build_y_model(net, 0, 1), UsageError);
  EXPECT_THROW(build_y_model(net, 4, 1), UsageError);
  EXPECT_NO_THROW(build_y_model(net, 1, 1));
  YModel last = build_y_model(net, 3, 1);
  EXPECT_EQ(last.main_head().depth(), 1u);
}

// Trunk then main head reproduces the base network exactly.
TEST(YModel, MainPathComposesToBase) {
  Network net = base_net();
  YModel y = build_y_model(net, 2, 1);
  Tensor x = testutil::random_batch(5, 16, 3, 0.0, 1.0);
  EXPECT_EQ(y.main_logits(x), forward(net, x));
  EXPECT_EQ(y.main_path().params(), net.params());
  EXPECT_EQ(y.split_k(), 2u);
  EXPECT_EQ(y.depth(), 4u);
}

TEST(YModel, AdaptableParameterCount) {
  YModel y = build_y_model(base_net(), 2, 1);
  // Trunk: 16*12+12 + 12*10+10; aux: 10*10+10 + 10*4+4.
  EXPECT_EQ(y.adaptable_params().size(), 204u + 130u + 110u + 44u);
  EXPECT_EQ(y.aux_head().output_dim(), kRotationClasses);
  ParamSet p = y.adaptable_params();
  for (double& v : p.values()) v = 0.5;
  y.set_adaptable_params(p);
  EXPECT_EQ(y.adaptable_params(), p);
  EXPECT_THROW(y.set_adaptable_params(ParamSet({{1, 1}})), ShapeError);
}

TEST(RotationBatch, DeterministicAndInvertible) {
  Tensor rows = testutil::random_batch(6, 9, 4, 0.0, 1.0);
  RotationBatch a = make_rotation_batch(rows, 3, 7);
  RotationBatch b = make_rotation_batch(rows, 3, 7);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.rot_labels, b.rot_labels);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto back = rotate_quarter(a.images.row(i), 3, -a.rot_labels[i]);
    std::vector<double> orig(rows.row(i).begin(), rows.row(i).end());
    EXPECT_EQ(back, orig);
  }
  EXPECT_THROW(make_rotation_batch(rows, 4, 1), ShapeError);
}

TEST(RotationBatch, LabelsRoughlyUniform) {
  Tensor rows = Tensor::matrix(10000, 4);
  RotationBatch rb = make_rotation_batch(rows, 2, 99);
  std::vector<int> counts(4, 0);
  for (int q : rb.rot_labels) ++counts[static_cast<std::size_t>(q)];
  for (int c : counts) {
    EXPECT_GE(c / 10000.0, 0.23);
    EXPECT_LE(c / 10000.0, 0.27);
  }
}

TEST(PretrainJoint, BetaZeroLeavesAuxHeadUntouched) {
  Dataset src = testutil::random_dataset(40, 4, 3, 1);
  YModel y = build_y_model(base_net(), 2, 5);
  YModel trained = pretrain_joint(y, src, JointLossConfig{0.0}, JointTrainConfig{2, 0.05, 8, 1});
  EXPECT_EQ(trained.aux_head().params(), y.aux_head().params());
  EXPECT_NE(trained.trunk().params(), y.trunk().params());
}

TEST(FisherSs, LayoutAndModes) {
  const auto& f = ss_fixture();
  EXPECT_TRUE(f.fisher.values.congruent(f.y.adaptable_params()));
  for (double v : f.fisher.values.values()) EXPECT_GE(v, 0.0);
  Dataset src = testutil::random_dataset(60, 4, 3, 1);
  FisherDiagonal main_only = compute_fisher_ss(f.y, src, 40, 3, {}, SsFisherMode::main_only);
  // No aux term: the aux-head block is exactly zero.
  const std::size_t k = f.y.split_k();
  for (std::size_t l = k; l < main_only.values.layer_count(); ++l) {
    for (double v : main_only.values.layer(l)) EXPECT_EQ(v, 0.0);
  }
  EXPECT_THROW(parse_ss_fisher_mode("both"), UsageError);
  EXPECT_EQ(parse_ss_fisher_mode(to_string(SsFisherMode::main_only)), SsFisherMode::main_only);
}

TEST(AdaptSelfSupervised, MainHeadFrozenAndImagesOnly) {
  const auto& f = ss_fixture();
  AnchorParams anchor(f.y.adaptable_params());
  auto res = adapt_self_supervised(f.y, anchor, f.fisher, f.target, f.source_test, ss_grid(), {}, 31);
  EXPECT_EQ(res.report.method, "dira-ss");
  EXPECT_EQ(res.model.main_head().params(), f.y.main_head().params());
  EXPECT_EQ(res.report.candidates.size(), 4u);
  EXPECT_EQ(res.report.n_samples, f.target.size());
  const auto& best = select_best(res.report);
  EXPECT_EQ(fingerprint(res.model.adaptable_params()), best.params_fingerprint);
  EXPECT_DOUBLE_EQ(best.source_accuracy, main_accuracy(res.model, f.source_test));
}

TEST(AdaptSelfSupervised, DeterministicAcrossThreadCounts) {
  const auto& f = ss_fixture();
  AnchorParams anchor(f.y.adaptable_params());
  AdaptOptions one, many;
  one.threads = 1;
  many.threads = 4;
  auto a = adapt_self_supervised(f.y, anchor, f.fisher, f.target, f.source_test, ss_grid(), {}, 32, one);
  auto b = adapt_self_supervised(f.y, anchor, f.fisher, f.target, f.source_test, ss_grid(), {}, 32, many);
  EXPECT_EQ(a.model, b.model);
  a.report.wall_seconds = b.report.wall_seconds = 0.0;
  EXPECT_EQ(to_json(a.report), to_json(b.report));
}

TEST(AdaptSelfSupervised, WrongImageWidthRejected) {
  const auto& f = ss_fixture();
  ImageSet wrong(3, std::vector<double>(9 * 5, 0.5));
  EXPECT_THROW(adapt_self_supervised(f.y, AnchorParams(f.y.adaptable_params()), f.fisher, wrong, f.source_test,
                                     ss_grid(), {}, 1),
               ShapeError);
}
