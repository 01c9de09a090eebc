#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftlab/data.hpp"
#include "driftlab/dataset.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/network.hpp"

namespace driftlab {

/// (lambda, eta) candidates plus the training budget of each candidate.
struct HyperGrid {
  std::vector<double> lambdas{0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0};
  std::vector<double> learning_rates{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::size_t steps = 100;
  /// Upper bound; the effective batch is min(batch_size, number of samples).
  std::size_t batch_size = 32;

  /// Non-empty, strictly increasing lists; lambda >= 0, eta > 0.
  void validate() const;
  std::size_t size() const noexcept { return lambdas.size() * learning_rates.size(); }
};

struct CfasConfig {
  double zeta = 10.0;
  void validate() const;
};

/// Controlled forgetting adaptation score: A_T + zeta * A_0.
constexpr double cfas(double target_accuracy, double source_accuracy, double zeta) noexcept {
  return target_accuracy + zeta * source_accuracy;
}

struct CandidateResult {
  std::size_t lambda_index = 0;
  std::size_t eta_index = 0;
  double lambda = 0.0;
  double learning_rate = 0.0;
  /// A_T: accuracy on the retraining samples (rotation accuracy for dira-ss).
  double target_accuracy = 0.0;
  /// A_0: accuracy on the clean source test split.
  double source_accuracy = 0.0;
  /// cfas(A_T, A_0, zeta); -infinity for failed candidates.
  double score = 0.0;
  bool failed = false;
  std::string failure;
  /// Offline-only accuracy on the full corrupted test split. Never used for scoring.
  std::optional<double> target_test_accuracy;
  std::string params_fingerprint;
};

struct AdaptationReport {
  std::string method;
  DomainSpec domain;
  std::size_t n_samples = 0;
  double zeta = 10.0;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::vector<CandidateResult> candidates;
  std::size_t selected = 0;
  /// Wall-clock metadata; excluded from to_json so result files stay reproducible.
  double wall_seconds = 0.0;
};

/// Index of the best non-failed candidate: highest score, then larger lambda,
/// then smaller eta. Throws AdaptationError if every candidate failed.
std::size_t select_best_index(std::span<const CandidateResult> candidates);
const CandidateResult& select_best(const AdaptationReport& report);

nlohmann::json to_json(const AdaptationReport& report);
nlohmann::json metadata_json(const AdaptationReport& report);
AdaptationReport report_from_json(const nlohmann::json& j);
std::string render_text(const AdaptationReport& report);

struct AdaptOptions {
  /// Worker threads for the candidate sweep (0 or 1 = serial). Results do not depend on it.
  unsigned threads = 0;
  /// Corrupted test split for the offline target_test_accuracy column.
  const Dataset* target_test = nullptr;
  /// Labels only; stored in the report.
  DomainSpec domain;
  std::string method = "dira";
};

struct SupervisedAdaptation {
  AdaptationReport report;
  Network model;
};

/// Retrains a copy of m0 on the labeled samples for every (lambda, eta) of the
/// grid, scores each copy with CFAS and returns the report and the selected model.
SupervisedAdaptation adapt_supervised(const Network& m0, const AnchorParams& anchor, const FisherDiagonal& fisher,
                                      const Dataset& samples, const Dataset& source_test, const HyperGrid& grid,
                                      const CfasConfig& cfas_cfg, std::uint64_t seed, const AdaptOptions& options = {});

/// Plain fine-tuning baseline: adapt_supervised with the lambda grid forced to {0}.
SupervisedAdaptation adapt_finetune(const Network& m0, const AnchorParams& anchor, const FisherDiagonal& fisher,
                                    const Dataset& samples, const Dataset& source_test, HyperGrid grid,
                                    const CfasConfig& cfas_cfg, std::uint64_t seed, AdaptOptions options = {});

/// Seed of the candidate at grid position (lambda_index, eta_index).
std::uint64_t candidate_seed(std::uint64_t seed, std::size_t lambda_index, std::size_t eta_index) noexcept;

namespace detail {

struct CandidateOutcome {
  double target_accuracy = 0.0;
  double source_accuracy = 0.0;
  std::optional<double> target_test_accuracy;
  ParamSet params;
};

/// Runs `run` for every grid cell (in parallel when asked), turns NumericError
/// into failed candidates and fills in scores, fingerprints and the selection.
/// Returns the report skeleton plus the parameters of the selected candidate.
std::pair<AdaptationReport, ParamSet> sweep_grid(
    const HyperGrid& grid, const CfasConfig& cfas_cfg, std::uint64_t seed, const AdaptOptions& options,
    const std::function<CandidateOutcome(double lambda, double eta, std::uint64_t candidate_seed)>& run);

}  // namespace detail

}  // namespace driftlab
