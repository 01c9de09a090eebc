#include "driftlab/analysis.hpp"

#include <algorithm>
#include <cstdio>

#include "driftlab/errors.hpp"

namespace driftlab {

VarianceProfile layer_variance(std::span<const ParamSet> models, std::optional<std::size_t> sample_count) {
  if (models.size() < 2) throw UsageError("variance needs at least two models");
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (!models[m].congruent(models[0])) {
      throw UsageError("model " + std::to_string(m) + " differs in layout from model 0");
    }
  }
  const double count = static_cast<double>(models.size());
  VarianceProfile profile;
  profile.model_count = models.size();
  profile.sample_count = sample_count;
  for (std::size_t l = 0; l < models[0].layer_count(); ++l) {
    const std::size_t n = models[0].layer(l).size();
    double sum_var = 0.0;
    double max_var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (const auto& m : models) mean += m.layer(l)[j];
      mean /= count;
      double ss = 0.0;
      for (const auto& m : models) {
        const double d = m.layer(l)[j] - mean;
        ss += d * d;
      }
      const double var = ss / count;
      sum_var += var;
      max_var = std::max(max_var, var);
    }
    profile.layers.push_back({l + 1, n, sum_var / static_cast<double>(n), max_var});
  }
  return profile;
}

nlohmann::json to_json(const VarianceProfile& profile) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : profile.layers) {
    layers.push_back({{"layer", l.layer},
                      {"param_count", l.param_count},
                      {"mean_variance", l.mean_variance},
                      {"max_variance", l.max_variance}});
  }
  nlohmann::json j = {{"model_count", profile.model_count}, {"layers", std::move(layers)}};
  j["sample_count"] = profile.sample_count ? nlohmann::json(*profile.sample_count) : nlohmann::json(nullptr);
  return j;
}

std::string render_text(const VarianceProfile& profile) {
  std::string out = "# layer param_count mean_variance max_variance";
  if (profile.sample_count) out += " sample_count";
  out += "\n";
  char line[160];
  for (const auto& l : profile.layers) {
    std::snprintf(line, sizeof line, "%zu %zu %.9e %.9e", l.layer, l.param_count, l.mean_variance, l.max_variance);
    out += line;
    if (profile.sample_count) out += " " + std::to_string(*profile.sample_count);
    out += "\n";
  }
  return out;
}

std::string corruption_abbreviation(std::string_view name) {
  static const std::map<std::string, std::string, std::less<>> kShort = {
      {"gaussian_noise", "gaus"}, {"impulse_noise", "impul"}, {"blur", "blur"},
      {"contrast", "cnt"},        {"brightness", "brt"},      {"pixelate", "px"},
  };
  const auto colon = name.find(':');
  const auto base = name.substr(0, colon);
  auto it = kShort.find(base);
  return it == kShort.end() ? std::string(name) : it->second;
}

CorruptionTable corruption_table(std::span<const MethodAccuracies> rows, std::span<const std::string> corruptions) {
  if (rows.empty() || corruptions.empty()) throw UsageError("corruption table needs methods and corruptions");
  CorruptionTable t;
  t.corruptions.assign(corruptions.begin(), corruptions.end());
  for (const auto& row : rows) {
    std::vector<double> cells;
    double sum = 0.0;
    for (const auto& c : corruptions) {
      auto it = row.by_corruption.find(c);
      if (it == row.by_corruption.end()) {
        throw UsageError("missing cell for method '" + row.method + "', corruption '" + c + "'");
      }
      cells.push_back(it->second);
      sum += it->second;
    }
    t.methods.push_back(row.method);
    t.means.push_back(sum / static_cast<double>(corruptions.size()));
    t.cells.push_back(std::move(cells));
  }
  const std::size_t cols = corruptions.size() + 1;
  auto value = [&](std::size_t m, std::size_t c) { return c < corruptions.size() ? t.cells[m][c] : t.means[m]; };
  t.best.assign(t.methods.size(), std::vector<bool>(cols, false));
  for (std::size_t c = 0; c < cols; ++c) {
    double top = value(0, c);
    for (std::size_t m = 1; m < t.methods.size(); ++m) top = std::max(top, value(m, c));
    for (std::size_t m = 0; m < t.methods.size(); ++m) t.best[m][c] = value(m, c) == top;
  }
  return t;
}

nlohmann::json to_json(const CorruptionTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t c = 0; c < table.corruptions.size(); ++c) cells[table.corruptions[c]] = table.cells[m][c];
    nlohmann::json best = nlohmann::json::array();
    for (std::size_t c = 0; c < table.corruptions.size(); ++c) {
      if (table.best[m][c]) best.push_back(table.corruptions[c]);
    }
    if (table.best[m].back()) best.push_back("mean");
    rows.push_back({{"method", table.methods[m]}, {"cells", std::move(cells)}, {"mean", table.means[m]},
                    {"best", std::move(best)}});
  }
  return {{"corruptions", table.corruptions}, {"rows", std::move(rows)}};
}

std::string render_text(const CorruptionTable& table) {
  std::size_t name_width = 6;
  for (const auto& m : table.methods) name_width = std::max(name_width, m.size());
  std::vector<std::string> headers;
  for (const auto& c : table.corruptions) headers.push_back(corruption_abbreviation(c));
  headers.emplace_back("mean");
  std::size_t cell_width = 7;
  for (const auto& h : headers) cell_width = std::max(cell_width, h.size() + 1);

  auto pad_left = [](std::string s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };

  std::string out = pad_right("", name_width);
  for (const auto& h : headers) out += " " + pad_left(h, cell_width);
  out += "\n";
  char buf[64];
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    out += pad_right(table.methods[m], name_width);
    for (std::size_t c = 0; c < headers.size(); ++c) {
      const double v = c < table.corruptions.size() ? table.cells[m][c] : table.means[m];
      std::snprintf(buf, sizeof buf, "%.1f%s", v, table.best[m][c] ? "*" : " ");
      out += " " + pad_left(buf, cell_width);
    }
    out += "\n";
  }
  return out;
}

}  // namespace driftlab
