#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "driftlab/analysis.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

using namespace driftlab;

namespace {

ParamSet random_params(std::uint64_t seed) {
  ParamSet p({{3, 2}, {2, 2}});
  Rng rng(seed);
  for (double& v : p.values()) v = rng.uniform(-1, 1);
  return p;
}

// Independent two-pass variance per parameter, averaged over the layer.
double reference_layer_mean(const std::vector<ParamSet>& models, std::size_t layer) {
  const std::size_t n = models[0].layer(layer).size();
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> xs;
    for (const auto& m : models) xs.push_back(m.layer(layer)[j]);
    double s = 0.0, s2 = 0.0;
    for (double x : xs) {
      s += x;
      s2 += x * x;
    }
    const double mean = s / xs.size();
    total += s2 / xs.size() - mean * mean;
  }
  return total / n;
}

// Source row of the ImageNet-C severity-5 table, 15 corruption columns.
const std::vector<std::pair<std::string, double>> kSourceRow = {
    {"gaus", 1.6}, {"shot", 2.3}, {"impul", 1.6}, {"defcs", 9.4}, {"gls", 6.6},
    {"mtn", 10.2}, {"zm", 18.2},  {"snw", 10.5},  {"frst", 15.0}, {"fg", 13.7},
    {"brt", 48.9}, {"cnt", 2.8},  {"els", 14.7},  {"px", 23.1},   {"jpg", 28.3},
};

}  // namespace

TEST(LayerVariance, IdenticalModelsGiveZero) {
  ParamSet p = random_params(1);
  std::vector<ParamSet> models(4, p);
  auto prof = layer_variance(models);
  ASSERT_EQ(prof.layers.size(), 2u);
  for (const auto& l : prof.layers) {
    EXPECT_EQ(l.mean_variance, 0.0);
    EXPECT_EQ(l.max_variance, 0.0);
  }
  EXPECT_EQ(prof.layers[0].layer, 1u);
  EXPECT_EQ(prof.layers[0].param_count, 8u);
}

TEST(LayerVariance, TwoModelsOneParameterApart) {
  ParamSet a({{1, 1}}), b({{1, 1}});
  const double delta = 0.6;
  b.values()[0] = delta;
  std::vector<ParamSet> models = {a, b};
  auto prof = layer_variance(models);
  EXPECT_DOUBLE_EQ(prof.layers[0].max_variance, delta * delta / 4);
  EXPECT_DOUBLE_EQ(prof.layers[0].mean_variance, delta * delta / 8);  // two params in the layer
}

TEST(LayerVariance, MatchesReferenceAndIsOrderInvariant) {
  std::vector<ParamSet> models = {random_params(1), random_params(2), random_params(3), random_params(4)};
  auto prof = layer_variance(models, 50);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_NEAR(prof.layers[l].mean_variance, reference_layer_mean(models, l), 1e-14);
  }
  std::vector<ParamSet> reordered = {models[2], models[0], models[3], models[1]};
  auto again = layer_variance(reordered, 50);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_NEAR(again.layers[l].mean_variance, prof.layers[l].mean_variance, 1e-15);
  }
  EXPECT_EQ(prof.sample_count, 50u);
}

TEST(LayerVariance, ScalesWithSquare) {
  std::vector<ParamSet> models = {random_params(5), random_params(6), random_params(7)};
  std::vector<ParamSet> scaled = models;
  const double c = 3.0;
  for (auto& m : scaled) {
    for (double& v : m.values()) v *= c;
  }
  auto a = layer_variance(models);
  auto b = layer_variance(scaled);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_NEAR(b.layers[l].mean_variance, c * c * a.layers[l].mean_variance, 1e-13);
  }
}

TEST(LayerVariance, Errors) {
  std::vector<ParamSet> one = {random_params(1)};
  EXPECT_THROW(layer_variance(one), UsageError);
  std::vector<ParamSet> ragged = {random_params(1), ParamSet({{3, 2}})};
  EXPECT_THROW(layer_variance(ragged), UsageError);
}

TEST(LayerVariance, JsonAndText) {
  std::vector<ParamSet> models = {random_params(1), random_params(2)};
  auto prof = layer_variance(models);
  auto j = to_json(prof);
  EXPECT_EQ(j["model_count"], 2);
  EXPECT_TRUE(j["sample_count"].is_null());
  EXPECT_EQ(j["layers"].size(), 2u);
  EXPECT_NE(render_text(prof).find("mean_variance"), std::string::npos);
}

TEST(CorruptionTable, SourceRowMean) {
  MethodAccuracies row{"Source", {}};
  std::vector<std::string> cols;
  double sum = 0.0;
  for (const auto& [name, v] : kSourceRow) {
    row.by_corruption[name] = v;
    cols.push_back(name);
    sum += v;
  }
  std::vector<MethodAccuracies> rows = {row};
  auto t = corruption_table(rows, cols);
  EXPECT_NEAR(t.means[0], 13.8, 0.05);
  EXPECT_DOUBLE_EQ(t.means[0], sum / 15.0);
}

TEST(CorruptionTable, MissingCellNamed) {
  std::vector<MethodAccuracies> rows = {{"A", {{"blur", 1.0}, {"contrast", 2.0}}}, {"B", {{"blur", 3.0}}}};
  std::vector<std::string> cols = {"blur", "contrast"};
  try {
    corruption_table(rows, cols);
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'B'"), std::string::npos);
    EXPECT_NE(msg.find("contrast"), std::string::npos);
  }
}

TEST(CorruptionTable, SingleRowTwoColumnsAndBest) {
  std::vector<MethodAccuracies> rows = {{"only", {{"blur", 10.0}, {"contrast", 20.0}}}};
  std::vector<std::string> cols = {"blur", "contrast"};
  auto t = corruption_table(rows, cols);
  EXPECT_DOUBLE_EQ(t.means[0], 15.0);
  for (bool b : t.best[0]) EXPECT_TRUE(b);

  std::vector<MethodAccuracies> two = {{"A", {{"blur", 10.0}, {"contrast", 30.0}}},
                                       {"B", {{"blur", 12.0}, {"contrast", 20.0}}}};
  auto u = corruption_table(two, cols);
  EXPECT_FALSE(u.best[0][0]);
  EXPECT_TRUE(u.best[1][0]);
  EXPECT_TRUE(u.best[0][1]);
  EXPECT_TRUE(u.best[0][2]);  // mean 20 vs 16
  // The rendered mean is recomputable from the rendered cells.
  auto j = to_json(u);
  EXPECT_DOUBLE_EQ(j["rows"][1]["mean"].get<double>(),
                   (j["rows"][1]["cells"]["blur"].get<double>() + j["rows"][1]["cells"]["contrast"].get<double>()) /
                       2);
}

TEST(CorruptionTable, Abbreviations) {
  EXPECT_EQ(corruption_abbreviation("gaussian_noise"), "gaus");
  EXPECT_EQ(corruption_abbreviation("impulse_noise:5"), "impul");
  EXPECT_EQ(corruption_abbreviation("brightness"), "brt");
  EXPECT_EQ(corruption_abbreviation("contrast"), "cnt");
  EXPECT_EQ(corruption_abbreviation("pixelate"), "px");
  EXPECT_EQ(corruption_abbreviation("fog"), "fog");
  std::vector<MethodAccuracies> rows = {{"Source", {{"gaussian_noise", 57.25}}}};
  std::vector<std::string> cols = {"gaussian_noise"};
  const std::string text = render_text(corruption_table(rows, cols));
  EXPECT_NE(text.find("gaus"), std::string::npos);
  EXPECT_NE(text.find("57.2"), std::string::npos);
}

TEST(CorruptionTable, EmptyInputsRejected) {
  std::vector<MethodAccuracies> none;
  std::vector<std::string> cols = {"blur"};
  EXPECT_THROW(corruption_table(none, cols), UsageError);
}
