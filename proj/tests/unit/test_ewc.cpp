#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "driftlab/data.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/ewc.hpp"
#include "helpers.hpp"

using namespace driftlab;

namespace {

FisherDiagonal uniform_fisher(const ParamSet& like, double value) {
  FisherDiagonal f{ParamSet(like.layers()), 1, ""};
  for (double& v : f.values.values()) v = value;
  return f;
}

ParamSet perturbed(const ParamSet& p, std::uint64_t seed, double scale) {
  ParamSet out = p;
  Rng rng(seed);
  for (double& v : out.values()) v += rng.uniform(-scale, scale);
  return out;
}

FisherDiagonal random_fisher(const ParamSet& like, std::uint64_t seed) {
  FisherDiagonal f{ParamSet(like.layers()), 1, ""};
  Rng rng(seed);
  for (double& v : f.values.values()) v = rng.uniform(0.0, 2.0);
  return f;
}

double max_displacement(const ParamSet& a, const ParamSet& b) {
  return testutil::max_abs_diff(a.values(), b.values());
}

}  // namespace

TEST(EwcPenalty, ZeroAtAnchor) {
  Network net = Network::classifier(4, std::vector<std::size_t>{3}, 2, 1);
  AnchorParams anchor(net.params());
  EXPECT_EQ(ewc_penalty(net.params(), anchor, random_fisher(net.params(), 2), 7.0), 0.0);
  const GradientSet g = ewc_gradient(net.params(), anchor, random_fisher(net.params(), 2), 7.0);
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(EwcPenalty, SingleParameterArithmetic) {
  ParamSet theta({{1, 1}});  // one weight + one bias
  theta.values()[0] = 1.5;
  ParamSet star({{1, 1}});
  star.values()[0] = 1.0;
  FisherDiagonal f{ParamSet({{1, 1}}), 1, ""};
  f.values.values()[0] = 2.0;
  AnchorParams anchor(star);
  EXPECT_EQ(ewc_penalty(theta, anchor, f, 1.0), 0.5);
  EXPECT_EQ(ewc_gradient(theta, anchor, f, 1.0).values()[0], 2.0);
}

TEST(EwcPenalty, LinearInLambdaAndZeroAtLambdaZero) {
  Network net = Network::classifier(5, std::vector<std::size_t>{4}, 3, 3);
  ParamSet theta = perturbed(net.params(), 1, 0.3);
  AnchorParams anchor(net.params());
  auto f = random_fisher(theta, 4);
  const double p = ewc_penalty(theta, anchor, f, 3.0);
  EXPECT_GT(p, 0.0);
  EXPECT_EQ(ewc_penalty(theta, anchor, f, 6.0), 2.0 * p);
  EXPECT_EQ(ewc_penalty(theta, anchor, f, 0.0), 0.0);
}

TEST(EwcPenalty, PermutationInvariant) {
  // Permute (theta, theta*, F) together inside a single-layer block.
  ParamSet theta({{6, 1}}), star({{6, 1}});
  FisherDiagonal f{ParamSet({{6, 1}}), 1, ""};
  Rng rng(5);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    theta.values()[j] = rng.uniform(-1, 1);
    star.values()[j] = rng.uniform(-1, 1);
    f.values.values()[j] = rng.uniform(0, 1);
  }
  std::vector<std::size_t> perm(theta.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  ParamSet pt = theta, ps = star;
  FisherDiagonal pf = f;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    pt.values()[j] = theta.values()[perm[j]];
    ps.values()[j] = star.values()[perm[j]];
    pf.values.values()[j] = f.values.values()[perm[j]];
  }
  EXPECT_NEAR(ewc_penalty(theta, AnchorParams(star), f, 2.5), ewc_penalty(pt, AnchorParams(ps), pf, 2.5), 1e-14);
}

TEST(EwcPenalty, ShapeMismatch) {
  ParamSet a({{2, 2}}), b({{2, 3}});
  EXPECT_THROW(ewc_penalty(a, AnchorParams(b), uniform_fisher(a, 1.0), 1.0), ShapeError);
  EXPECT_THROW(ewc_gradient(a, AnchorParams(a), uniform_fisher(b, 1.0), 1.0), ShapeError);
}

TEST(EwcGradient, MatchesFiniteDifferencesOfPenalty) {
  Network net = Network::classifier(5, std::vector<std::size_t>{4}, 3, 3);
  ParamSet theta = perturbed(net.params(), 8, 0.4);
  AnchorParams anchor(net.params());
  auto f = random_fisher(theta, 9);
  const double lambda = 3.7, h = 1e-5;
  GradientSet g = ewc_gradient(theta, anchor, f, lambda);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    ParamSet p = theta, m = theta;
    p.values()[j] += h;
    m.values()[j] -= h;
    const double numeric = (ewc_penalty(p, anchor, f, lambda) - ewc_penalty(m, anchor, f, lambda)) / (2 * h);
    const double analytic = g.values()[j];
    const double scale = std::max(std::abs(analytic), 1e-3);
    EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-8) << "param " << j;
  }
}

TEST(RegularizedStep, LambdaZeroBitIdenticalToSgd) {
  Dataset d = testutil::random_dataset(16, 3, 3, 4);
  Network net = Network::classifier(9, std::vector<std::size_t>{6}, 3, 5);
  AnchorParams anchor(perturbed(net.params(), 3, 0.5));
  auto f = random_fisher(net.params(), 6);
  TrainLoopState a{net, 0.07, 0}, b{net, 0.07, 0};
  BatchSampler sa(d.size(), 5, 9), sb(d.size(), 5, 9);
  for (int t = 0; t < 25; ++t) {
    auto ia = sa.next();
    regularized_step(a, d.batch(ia), d.labels_at(ia), anchor, f, 0.0);
    auto ib = sb.next();
    sgd_step(b, backward(b.net, d.batch(ib), d.labels_at(ib)).grads);
  }
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(a.step, 25u);
}

TEST(RegularizedStep, HugeLambdaStaysCloserToAnchor) {
  Dataset d = testutil::random_dataset(30, 3, 3, 10);
  Network net = Network::classifier(9, std::vector<std::size_t>{8}, 3, 11);
  AnchorParams anchor(net.params());
  auto f = uniform_fisher(net.params(), 1.0);
  auto run = [&](double lambda) {
    TrainLoopState st{net, 0.1, 0};
    BatchSampler s(d.size(), 8, 3);
    for (int t = 0; t < 50; ++t) {
      auto idx = s.next();
      regularized_step(st, d.batch(idx), d.labels_at(idx), anchor, f, lambda);
    }
    return max_displacement(st.net.params(), anchor.params());
  };
  const double free = run(0.0);
  const double held = run(1e9);
  EXPECT_GT(free, 0.0);
  EXPECT_LT(held, free);
}

TEST(RegularizedUpdate, ZeroLossContractsGeometrically) {
  ParamSet star({{3, 2}});
  ParamSet theta = perturbed(star, 2, 1.0);
  auto f = random_fisher(star, 3);
  AnchorParams anchor(star);
  const double lambda = 2.0, eta = 0.1;  // 2 * eta * lambda * F <= 0.8 < 1
  GradientSet zero(star.layers());
  ParamSet cur = theta;
  const int steps = 30;
  for (int t = 0; t < steps; ++t) regularized_update(cur, zero, anchor, f, lambda, eta);
  for (std::size_t j = 0; j < cur.size(); ++j) {
    const double ratio = 1.0 - 2.0 * eta * lambda * f.values.values()[j];
    const double expected = (theta.values()[j] - star.values()[j]) * std::pow(ratio, steps);
    EXPECT_NEAR(cur.values()[j] - star.values()[j], expected, 1e-12);
  }
}

TEST(RegularizedUpdate, StiffPullLandsOnAnchorMinusLossStep) {
  ParamSet star({{1, 1}});
  ParamSet theta = star;
  theta.values()[0] = 3.0;
  FisherDiagonal f = uniform_fisher(star, 1.0);
  GradientSet g(star.layers());
  g.values()[0] = 0.5;
  regularized_update(theta, g, AnchorParams(star), f, 1e6, 0.1);
  EXPECT_DOUBLE_EQ(theta.values()[0], star.values()[0] - 0.05);
}

TEST(RegularizedUpdate, NonFiniteGradientRejected) {
  ParamSet p({{2, 1}});
  GradientSet g(p.layers());
  g.values()[0] = INFINITY;
  ParamSet before = p;
  EXPECT_THROW(regularized_update(p, g, AnchorParams(p), uniform_fisher(p, 1.0), 1.0, 0.1), NumericError);
  EXPECT_EQ(p, before);
  EXPECT_THROW(regularized_update(p, GradientSet(p.layers()), AnchorParams(p), uniform_fisher(p, 1.0), -1.0, 0.1),
               UsageError);
}

TEST(Fisher, LogisticClosedForm) {
  // Two logits (0, theta * x); the class-1 weight is the logistic parameter.
  Network net({{1, 2, Activation::identity}}, 1);
  for (double& v : net.params().values()) v = 0.0;
  Dataset d(1, 2, {1.0}, {1}, DatasetRole::source_train);
  FisherDiagonal f = compute_fisher(net, d, 1, 3);
  // Layout: w00, w10, b0, b1.
  EXPECT_DOUBLE_EQ(f.values.values()[1], 0.25);
  EXPECT_DOUBLE_EQ(f.values.values()[3], 0.25);
  EXPECT_EQ(f.sample_count, 1u);
}

TEST(Fisher, DeadParametersHaveZeroFisher) {
  Network net = Network::classifier(4, std::vector<std::size_t>{5, 3}, 2, 7);
  for (double& w : net.params().weights(2)) w = 0.0;
  Dataset d = testutil::random_dataset(20, 2, 2, 1);
  FisherDiagonal f = compute_fisher(net, d, 20, 1);
  for (std::size_t l = 0; l < 2; ++l) {
    for (double v : f.values.layer(l)) EXPECT_EQ(v, 0.0);
  }
  double last = 0.0;
  for (double v : f.values.bias(2)) last += v;
  EXPECT_GT(last, 0.0);
}

TEST(Fisher, DeterministicNonNegativeAndModeAware) {
  Network net = Network::classifier(9, std::vector<std::size_t>{6}, 3, 2);
  Dataset d = testutil::random_dataset(40, 3, 3, 6);
  FisherDiagonal a = compute_fisher(net, d, 30, 4);
  FisherDiagonal b = compute_fisher(net, d, 30, 4);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.source_fingerprint, d.fingerprint());
  for (double v : a.values.values()) EXPECT_GE(v, 0.0);
  FisherDiagonal s = compute_fisher(net, d, 30, 4, FisherLabelMode::sampled);
  EXPECT_NE(s.values, a.values);
  for (double v : s.values.values()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(compute_fisher(net, d, 41, 4), UsageError);
}

TEST(Fisher, NonFiniteNetworkIsNumericError) {
  Network net = Network::classifier(4, std::vector<std::size_t>{3}, 2, 1);
  // A NaN in the output bias cannot be masked by a ReLU.
  net.params().bias(1)[0] = std::nan("");
  Dataset d = testutil::random_dataset(5, 2, 2, 1);
  EXPECT_THROW(compute_fisher(net, d, 5, 1), NumericError);
}

TEST(Fisher, ValidateRejectsNegativeEntries) {
  FisherDiagonal f{ParamSet({{1, 1}}), 1, ""};
  f.values.values()[0] = -1e-3;
  EXPECT_THROW(f.validate(), NumericError);
}

// Monte-Carlo stability on a trained glyph model. Individual entries of a
// 500-sample estimate are too noisy for a 10% band, so the comparison is per
// layer (sum of F over the layer).
TEST(Fisher, StableUnderDoublingSampleCount) {
  GlyphSpec spec;
  spec.samples_per_class = 200;
  auto splits = generate_glyphs(spec);
  Network net = Network::classifier(256, std::vector<std::size_t>{64, 32}, 6, 1);
  net = train(net, splits.train, TrainConfig{8, 0.05, 32, 2});
  FisherDiagonal half = compute_fisher(net, splits.train, 480, 3);
  FisherDiagonal full = compute_fisher(net, splits.train, 960, 3);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    double a = 0.0, b = 0.0;
    for (double v : half.values.layer(l)) a += v;
    for (double v : full.values.layer(l)) b += v;
    EXPECT_LT(std::abs(a - b) / b, 0.10) << "layer " << l;
  }
}
