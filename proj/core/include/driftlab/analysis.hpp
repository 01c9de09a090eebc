#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftlab/params.hpp"

namespace driftlab {

struct LayerVariance {
  /// 1-based, counted from the input side.
  std::size_t layer = 0;
  std::size_t param_count = 0;
  double mean_variance = 0.0;
  double max_variance = 0.0;
};

/// Per-layer spread of parameters across a set of adapted models.
struct VarianceProfile {
  std::vector<LayerVariance> layers;
  std::size_t model_count = 0;
  /// Optional grouping key, e.g. the number of adaptation samples.
  std::optional<std::size_t> sample_count;
};

/// Population variance of every parameter across `models`, aggregated per
/// layer (weights and bias together). Throws UsageError for fewer than two
/// models or incongruent layouts.
VarianceProfile layer_variance(std::span<const ParamSet> models, std::optional<std::size_t> sample_count = {});

nlohmann::json to_json(const VarianceProfile& profile);
/// Whitespace-separated columns, one row per layer.
std::string render_text(const VarianceProfile& profile);

/// Accuracies (percent) of one method, keyed by corruption name.
struct MethodAccuracies {
  std::string method;
  std::map<std::string, double> by_corruption;
};

/// Methods x corruptions accuracy grid with a per-row mean column.
struct CorruptionTable {
  std::vector<std::string> methods;
  std::vector<std::string> corruptions;
  /// cells[m][c] in percent.
  std::vector<std::vector<double>> cells;
  std::vector<double> means;
  /// best[m][c] for c in [0, corruptions.size()], the last column being the mean.
  std::vector<std::vector<bool>> best;
};

/// Throws UsageError naming the first missing (method, corruption) cell.
CorruptionTable corruption_table(std::span<const MethodAccuracies> rows, std::span<const std::string> corruptions);

/// Short column header: gaussian_noise -> "gaus", contrast -> "cnt", ... Unknown names pass through.
std::string corruption_abbreviation(std::string_view name);

nlohmann::json to_json(const CorruptionTable& table);
/// Fixed-width text, one decimal; the best cell of each column carries a trailing '*'.
std::string render_text(const CorruptionTable& table);

}  // namespace driftlab
