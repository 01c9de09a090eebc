#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "driftlab/errors.hpp"
#include "driftlab/network.hpp"
#include "helpers.hpp"

using namespace driftlab;
using testutil::random_batch;
using testutil::random_labels;

namespace {

Network random_net(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t depth = 1 + rng.index(3);
  std::vector<LayerSpec> layers;
  std::size_t in = 2 + rng.index(5);
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t out = 2 + rng.index(5);
    const bool last = l + 1 == depth;
    layers.push_back({in, out, last ? Activation::identity : Activation::relu});
    in = out;
  }
  Network net(layers, seed);
  // Non-zero biases so the gradient check covers them too.
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (double& b : net.params().bias(l)) b = rng.uniform(-0.5, 0.5);
  }
  return net;
}

}  // namespace

TEST(Forward, ZeroParamsGiveZeroLogits) {
  Network net({{3, 4, Activation::relu}, {4, 2, Activation::identity}}, 1);
  for (double& v : net.params().values()) v = 0.0;
  Tensor out = forward(net, random_batch(5, 3, 2));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityWeights) {
  Network net({{3, 3, Activation::identity}}, 1);
  auto w = net.params().weights(0);
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  Tensor x({1, 3}, {1.0, 2.0, 3.0});
  Tensor y = forward(net, x);
  EXPECT_EQ(y.values()[0], 1.0);
  EXPECT_EQ(y.values()[1], 2.0);
  EXPECT_EQ(y.values()[2], 3.0);
}

TEST(Forward, HandComputedTwoLayerTrace) {
  // 2 -> 3 (relu) -> 2, parameters set by hand.
  Network net({{2, 3, Activation::relu}, {3, 2, Activation::identity}}, 9);
  const std::vector<double> p = {
      1.0, -1.0,  0.5, 2.0,  -1.0, 0.0,  // W1 (3 x 2)
      0.1, 0.2,  -0.3,                   // b1
      1.0, 0.0,  2.0,  -1.0, 1.0, 0.5,   // W2 (2 x 3)
      0.0, 1.0,                          // b2
  };
  std::copy(p.begin(), p.end(), net.params().values().begin());
  Tensor x({1, 2}, {0.5, 0.25});
  // h = relu([0.5-0.25+0.1, 0.25+0.5+0.2, -0.5-0.3]) = [0.35, 0.95, 0]
  // z = [0.35 + 0 + 0, -0.35 + 0.95 + 0 + 1] = [0.35, 1.6]
  Tensor z = forward(net, x);
  EXPECT_NEAR(z.values()[0], 0.35, 1e-15);
  EXPECT_NEAR(z.values()[1], 1.6, 1e-15);
}

TEST(Forward, MatchesReferenceImplementation) {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    Network net = random_net(s);
    Tensor x = random_batch(4, net.input_dim(), s + 100);
    Tensor z = forward(net, x);
    for (std::size_t r = 0; r < 4; ++r) {
      auto ref = testutil::reference_forward(net, x.row(r));
      EXPECT_LT(testutil::max_abs_diff(z.row(r), ref), 1e-12);
    }
  }
}

TEST(Forward, DimensionMismatchNamesBothDims) {
  Network net({{3, 2, Activation::identity}}, 1);
  try {
    forward(net, random_batch(1, 4, 1));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos);
    EXPECT_NE(msg.find('4'), std::string::npos);
  }
}

TEST(Network, RejectsIncompatibleLayers) {
  EXPECT_THROW(Network({{3, 4, Activation::relu}, {5, 2, Activation::identity}}, 1), ShapeError);
}

TEST(Network, GlorotInitWithinLimitsAndZeroBias) {
  Network net({{30, 20, Activation::relu}, {20, 5, Activation::identity}}, 4);
  const double lim0 = std::sqrt(6.0 / 50.0);
  for (double w : net.params().weights(0)) EXPECT_LE(std::abs(w), lim0);
  for (double b : net.params().bias(0)) EXPECT_EQ(b, 0.0);
  for (double b : net.params().bias(1)) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(Network(net.layers(), 4), net);
  EXPECT_NE(Network(net.layers(), 5).params(), net.params());
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  Tensor z({2, 4}, std::vector<double>(8, 0.3));
  std::vector<int> y = {0, 3};
  EXPECT_DOUBLE_EQ(cross_entropy(z, y), std::log(4.0));
}

TEST(CrossEntropy, SaturatedCorrectClass) {
  Tensor z({1, 4}, {1000.0, 0.0, 0.0, 0.0});
  std::vector<int> y = {0};
  EXPECT_LT(cross_entropy(z, y), 1e-9);
}

TEST(CrossEntropy, TwoClassValue) {
  Tensor z({1, 2}, {1.0, 2.0});
  std::vector<int> y = {1};
  EXPECT_NEAR(cross_entropy(z, y), 0.313262, 1e-6);
  EXPECT_NEAR(cross_entropy(z, y), -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0))), 1e-15);
}

TEST(CrossEntropy, OutOfRangeLabel) {
  Tensor z({1, 3}, {0.0, 0.0, 0.0});
  std::vector<int> bad = {3};
  EXPECT_THROW(cross_entropy(z, bad), LabelError);
  std::vector<int> neg = {-1};
  EXPECT_THROW(cross_entropy(z, neg), LabelError);
}

TEST(CrossEntropy, NonNegativeOnRandomLogits) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Tensor z = random_batch(3, 5, s, -20.0, 20.0);
    auto y = random_labels(3, 5, s);
    EXPECT_GE(cross_entropy(z, y), 0.0);
  }
}

TEST(Backward, SoftmaxRegressionClosedForm) {
  Network net({{3, 4, Activation::identity}}, 3);
  Tensor x({1, 3}, {0.5, -1.0, 2.0});
  std::vector<int> y = {2};
  auto lg = backward(net, x, y);
  Tensor p = softmax(forward(net, x));
  for (std::size_t o = 0; o < 4; ++o) {
    const double d = p.values()[o] - (o == 2 ? 1.0 : 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(lg.grads.weights(0)[o * 3 + i], d * x.values()[i], 1e-15);
    }
    EXPECT_NEAR(lg.grads.bias(0)[o], d, 1e-15);
  }
}

TEST(Backward, StationaryAtSeparableMinimum) {
  // Two well-separated points, huge-margin weights: gradient vanishes.
  Network net({{1, 2, Activation::identity}}, 1);
  auto w = net.params().weights(0);
  w[0] = -50.0;
  w[1] = 50.0;
  Tensor x({2, 1}, {-1.0, 1.0});
  std::vector<int> y = {0, 1};
  auto lg = backward(net, x, y);
  for (double g : lg.grads.values()) EXPECT_LT(std::abs(g), 1e-6);
}

// Central differences of an independent reference loss against the analytic gradient.
TEST(Backward, FiniteDifferenceOracle) {
  const double h = 1e-5;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    Network net = random_net(s);
    const std::size_t batch = 1 + s % 5;
    Tensor x = random_batch(batch, net.input_dim(), s * 7);
    auto y = random_labels(batch, net.output_dim(), s * 13);
    auto lg = backward(net, x, y);
    EXPECT_NEAR(lg.loss, testutil::reference_loss(net, x, y), 1e-12);
    for (std::size_t j = 0; j < net.params().size(); ++j) {
      Network plus = net, minus = net;
      plus.params().values()[j] += h;
      minus.params().values()[j] -= h;
      const double numeric =
          (testutil::reference_loss(plus, x, y) - testutil::reference_loss(minus, x, y)) / (2.0 * h);
      const double analytic = lg.grads.values()[j];
      if (std::abs(analytic) < 1e-8) {
        EXPECT_LT(std::abs(numeric - analytic), 1e-8) << "net " << s << " param " << j;
      } else {
        const double rel = std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic));
        EXPECT_LT(rel, 1e-4) << "net " << s << " param " << j;
      }
    }
  }
}

TEST(Backward, PureRepeatedCalls) {
  Network net = random_net(3);
  Tensor x = random_batch(4, net.input_dim(), 1);
  auto y = random_labels(4, net.output_dim(), 2);
  auto a = backward(net, x, y);
  auto b = backward(net, x, y);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(SgdStep, Arithmetic) {
  Network net({{1, 1, Activation::identity}}, 1);
  net.params().values()[0] = 1.0;
  TrainLoopState st{net, 0.1, 0};
  GradientSet g(net.params().layers());
  g.values()[0] = 0.5;
  sgd_step(st, g);
  EXPECT_DOUBLE_EQ(st.net.params().values()[0], 0.95);
  EXPECT_EQ(st.step, 1u);
}

TEST(SgdStep, ZeroGradientAndZeroRateAreIdentity) {
  Network net = random_net(5);
  TrainLoopState st{net, 0.1, 7};
  sgd_step(st, GradientSet(net.params().layers()));
  EXPECT_EQ(st.net.params(), net.params());
  EXPECT_EQ(st.step, 8u);

  TrainLoopState st0{net, 0.0, 0};
  GradientSet g(net.params().layers());
  for (double& v : g.values()) v = 3.0;
  sgd_step(st0, g);
  EXPECT_EQ(st0.net.params(), net.params());
}

TEST(SgdStep, QuadraticGeometricDecay) {
  // d/dtheta (theta^2 / 2) = theta.
  Network net({{1, 1, Activation::identity}}, 1);
  net.params().values()[0] = 1.0;
  TrainLoopState st{net, 0.1, 0};
  for (int i = 0; i < 100; ++i) {
    GradientSet g(net.params().layers());
    g.values()[0] = st.net.params().values()[0];
    sgd_step(st, g);
  }
  EXPECT_NEAR(st.net.params().values()[0], std::pow(0.9, 100), 1e-18);
  EXPECT_NEAR(st.net.params().values()[0], 2.656e-5, 1e-8);
}

TEST(SgdStep, NonFiniteGradientLeavesParamsUntouched) {
  Network net = random_net(2);
  TrainLoopState st{net, 0.1, 0};
  GradientSet g(net.params().layers());
  g.values()[1] = std::nan("");
  EXPECT_THROW(sgd_step(st, g), NumericError);
  EXPECT_EQ(st.net.params(), net.params());
  EXPECT_EQ(st.step, 0u);
}

TEST(SgdStep, IncongruentGradient) {
  Network net = random_net(2);
  TrainLoopState st{net, 0.1, 0};
  EXPECT_THROW(sgd_step(st, GradientSet({{1, 1}})), ShapeError);
}

TEST(Accuracy, ConstantLogitsPickClassZero) {
  Network net({{4, 3, Activation::identity}}, 1);
  for (double& v : net.params().values()) v = 0.0;
  std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  Dataset d(2, 3, std::vector<double>(6 * 4, 0.5), labels, DatasetRole::source_test);
  EXPECT_DOUBLE_EQ(accuracy(net, d), 1.0 / 3.0);
}

TEST(Accuracy, MemorizesSmallSet) {
  Dataset d = testutil::random_dataset(10, 3, 3, 11);
  Network net = Network::classifier(9, std::vector<std::size_t>{32}, 3, 2);
  TrainConfig tc{400, 0.2, 10, 1};
  net = train(net, d, tc);
  EXPECT_DOUBLE_EQ(accuracy(net, d), 1.0);
}

TEST(Accuracy, EmptyDatasetIsUsageError) {
  // An empty Dataset cannot be constructed; the check fires on the constructor instead.
  EXPECT_THROW(Dataset(2, 2, {}, {}, DatasetRole::source_test), UsageError);
}

TEST(Argmax, TiesGoToLowestIndex) {
  std::vector<double> row = {1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(argmax(row), 1u);
}

TEST(BatchSampler, EachIndexOncePerEpoch) {
  BatchSampler s(10, 4, 3);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(10, 0);
    for (std::size_t b = 0; b < s.batches_per_epoch(); ++b) {
      for (auto i : s.next()) ++seen[i];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(Train, DeterministicPerSeed) {
  Dataset d = testutil::random_dataset(40, 3, 2, 5);
  Network net = Network::classifier(9, std::vector<std::size_t>{8}, 2, 2);
  TrainConfig tc{5, 0.1, 8, 3};
  EXPECT_EQ(train(net, d, tc), train(net, d, tc));
  TrainConfig other = tc;
  other.seed = 4;
  EXPECT_NE(train(net, d, tc).params(), train(net, d, other).params());
}
