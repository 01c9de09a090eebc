#include "driftlab/dira.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "driftlab/errors.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

void check_sorted_unique(const std::vector<double>& values, const char* what) {
  if (values.empty()) throw UsageError(std::string(what) + " grid is empty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) {
      throw UsageError(std::string(what) + " grid must be strictly increasing (no duplicates)");
    }
  }
}

}  // namespace

void HyperGrid::validate() const {
  check_sorted_unique(lambdas, "lambda");
  check_sorted_unique(learning_rates, "learning-rate");
  if (!(lambdas.front() >= 0.0) || !std::isfinite(lambdas.back())) {
    throw UsageError("lambda values must be finite and >= 0");
  }
  if (!(learning_rates.front() > 0.0) || !std::isfinite(learning_rates.back())) {
    throw UsageError("learning rates must be finite and > 0");
  }
  if (steps == 0) throw UsageError("steps per candidate must be positive");
  if (batch_size == 0) throw UsageError("batch size must be positive");
}

void CfasConfig::validate() const {
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw UsageError("zeta must be a finite value >= 0");
}

std::size_t select_best_index(std::span<const CandidateResult> candidates) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    const bool better = c.score > b.score ||
                        (c.score == b.score && (c.lambda > b.lambda ||
                                                (c.lambda == b.lambda && c.learning_rate < b.learning_rate)));
    if (better) best = i;
  }
  if (!best) throw AdaptationError("every adaptation candidate failed");
  return *best;
}

const CandidateResult& select_best(const AdaptationReport& report) {
  return report.candidates.at(select_best_index(report.candidates));
}

std::uint64_t candidate_seed(std::uint64_t seed, std::size_t lambda_index, std::size_t eta_index) noexcept {
  return derive_seed(seed, {stream::kCandidate, lambda_index, eta_index});
}

namespace detail {

std::pair<AdaptationReport, ParamSet> sweep_grid(
    const HyperGrid& grid, const CfasConfig& cfas_cfg, std::uint64_t seed, const AdaptOptions& options,
    const std::function<CandidateOutcome(double, double, std::uint64_t)>& run) {
  grid.validate();
  cfas_cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  const std::size_t n_eta = grid.learning_rates.size();
  std::vector<CandidateResult> results(grid.size());
  std::vector<ParamSet> params(grid.size());

  parallel_for(grid.size(), options.threads, [&](std::size_t k) {
    CandidateResult& r = results[k];
    r.lambda_index = k / n_eta;
    r.eta_index = k % n_eta;
    r.lambda = grid.lambdas[r.lambda_index];
    r.learning_rate = grid.learning_rates[r.eta_index];
    try {
      CandidateOutcome out = run(r.lambda, r.learning_rate, candidate_seed(seed, r.lambda_index, r.eta_index));
      r.target_accuracy = out.target_accuracy;
      r.source_accuracy = out.source_accuracy;
      r.target_test_accuracy = out.target_test_accuracy;
      r.score = cfas(r.target_accuracy, r.source_accuracy, cfas_cfg.zeta);
      r.params_fingerprint = fingerprint(out.params);
      params[k] = std::move(out.params);
    } catch (const NumericError& e) {
      r.failed = true;
      r.failure = e.what();
      r.score = -std::numeric_limits<double>::infinity();
    }
  });

  AdaptationReport report;
  report.method = options.method;
  report.domain = options.domain;
  report.zeta = cfas_cfg.zeta;
  report.steps = grid.steps;
  report.seed = seed;
  report.candidates = std::move(results);
  report.selected = select_best_index(report.candidates);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ParamSet selected = std::move(params[report.selected]);
  return {std::move(report), std::move(selected)};
}

}  // namespace detail

SupervisedAdaptation adapt_supervised(const Network& m0, const AnchorParams& anchor, const FisherDiagonal& fisher,
                                      const Dataset& samples, const Dataset& source_test, const HyperGrid& grid,
                                      const CfasConfig& cfas_cfg, std::uint64_t seed, const AdaptOptions& options) {
  require_congruent(m0.params(), anchor.params(), "adapt_supervised anchor");
  require_congruent(m0.params(), fisher.values, "adapt_supervised fisher");
  const std::size_t batch = std::min(grid.batch_size, samples.size());

  auto run = [&](double lambda, double eta, std::uint64_t cseed) {
    TrainLoopState state{m0, eta};
    BatchSampler sampler(samples.size(), batch, cseed);
    for (std::size_t step = 0; step < grid.steps; ++step) {
      auto idx = sampler.next();
      regularized_step(state, samples.batch(idx), samples.labels_at(idx), anchor, fisher, lambda);
    }
    detail::CandidateOutcome out;
    out.target_accuracy = accuracy(state.net, samples);
    out.source_accuracy = accuracy(state.net, source_test);
    if (options.target_test) out.target_test_accuracy = accuracy(state.net, *options.target_test);
    out.params = std::move(state.net.params());
    return out;
  };

  auto [report, best] = detail::sweep_grid(grid, cfas_cfg, seed, options, run);
  report.n_samples = samples.size();
  report.batch_size = batch;
  Network model(m0.layers(), std::move(best), m0.seed());
  return {std::move(report), std::move(model)};
}

SupervisedAdaptation adapt_finetune(const Network& m0, const AnchorParams& anchor, const FisherDiagonal& fisher,
                                    const Dataset& samples, const Dataset& source_test, HyperGrid grid,
                                    const CfasConfig& cfas_cfg, std::uint64_t seed, AdaptOptions options) {
  grid.lambdas = {0.0};
  if (options.method == "dira") options.method = "finetune";
  return adapt_supervised(m0, anchor, fisher, samples, source_test, grid, cfas_cfg, seed, options);
}

namespace {

nlohmann::json candidate_json(const CandidateResult& c) {
  nlohmann::json j = {
      {"lambda_index", c.lambda_index},
      {"eta_index", c.eta_index},
      {"lambda", c.lambda},
      {"eta", c.learning_rate},
      {"failed", c.failed},
  };
  if (c.failed) {
    j["failure"] = c.failure;
    j["A_T"] = nullptr;
    j["A_0"] = nullptr;
    j["cfas"] = nullptr;
  } else {
    j["A_T"] = c.target_accuracy;
    j["A_0"] = c.source_accuracy;
    j["cfas"] = c.score;
    j["params_fingerprint"] = c.params_fingerprint;
  }
  j["target_test_accuracy"] =
      c.target_test_accuracy ? nlohmann::json(*c.target_test_accuracy) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

nlohmann::json to_json(const AdaptationReport& report) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : report.candidates) candidates.push_back(candidate_json(c));
  return {
      {"method", report.method},
      {"domain", report.domain.name()},
      {"n_samples", report.n_samples},
      {"zeta", report.zeta},
      {"steps", report.steps},
      {"batch_size", report.batch_size},
      {"seed", report.seed},
      {"selected", report.selected},
      {"candidates", std::move(candidates)},
  };
}

nlohmann::json metadata_json(const AdaptationReport& report) {
  return {{"method", report.method}, {"domain", report.domain.name()}, {"wall_seconds", report.wall_seconds}};
}

AdaptationReport report_from_json(const nlohmann::json& j) {
  AdaptationReport r;
  r.method = j.at("method").get<std::string>();
  r.domain = DomainSpec::parse(j.at("domain").get<std::string>());
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.zeta = j.at("zeta").get<double>();
  r.steps = j.at("steps").get<std::size_t>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.selected = j.at("selected").get<std::size_t>();
  for (const auto& cj : j.at("candidates")) {
    CandidateResult c;
    c.lambda_index = cj.at("lambda_index").get<std::size_t>();
    c.eta_index = cj.at("eta_index").get<std::size_t>();
    c.lambda = cj.at("lambda").get<double>();
    c.learning_rate = cj.at("eta").get<double>();
    c.failed = cj.at("failed").get<bool>();
    if (c.failed) {
      c.failure = cj.value("failure", "");
      c.score = -std::numeric_limits<double>::infinity();
    } else {
      c.target_accuracy = cj.at("A_T").get<double>();
      c.source_accuracy = cj.at("A_0").get<double>();
      c.score = cj.at("cfas").get<double>();
      c.params_fingerprint = cj.value("params_fingerprint", "");
    }
    if (!cj.at("target_test_accuracy").is_null()) c.target_test_accuracy = cj["target_test_accuracy"].get<double>();
    r.candidates.push_back(std::move(c));
  }
  return r;
}

std::string render_text(const AdaptationReport& report) {
  std::string out;
  char line[192];
  std::snprintf(line, sizeof line, "method %s  domain %s  samples %zu  zeta %g  steps %zu  batch %zu\n",
                report.method.c_str(), report.domain.name().c_str(), report.n_samples, report.zeta, report.steps,
                report.batch_size);
  out += line;
  std::snprintf(line, sizeof line, "%3s %11s %11s %8s %8s %9s %11s\n", "", "lambda", "eta", "A_T", "A_0", "CFAS",
                "target_test");
  out += line;
  for (std::size_t i = 0; i < report.candidates.size(); ++i) {
    const auto& c = report.candidates[i];
    const char* mark = i == report.selected ? "*" : "";
    if (c.failed) {
      std::snprintf(line, sizeof line, "%3s %11.4g %11.4g %8s %8s %9s %11s\n", mark, c.lambda, c.learning_rate,
                    "-", "-", "failed", "-");
    } else {
      char tt[32] = "-";
      if (c.target_test_accuracy) std::snprintf(tt, sizeof tt, "%.4f", *c.target_test_accuracy);
      std::snprintf(line, sizeof line, "%3s %11.4g %11.4g %8.4f %8.4f %9.4f %11s\n", mark, c.lambda,
                    c.learning_rate, c.target_accuracy, c.source_accuracy, c.score, tt);
    }
    out += line;
  }
  return out;
}

}  // namespace driftlab
