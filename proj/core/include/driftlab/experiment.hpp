#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftlab/analysis.hpp"
#include "driftlab/data.hpp"
#include "driftlab/dira.hpp"
#include "driftlab/dira_ss.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/network.hpp"

namespace driftlab {

struct IdxSource {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
};

struct FisherSettings {
  std::size_t n_samples = 1000;
  FisherLabelMode label_mode = FisherLabelMode::true_label;
  SsFisherMode ss_mode = SsFisherMode::joint;
};

struct SelfSupervisedSettings {
  /// Trunk depth of the Y-model.
  std::size_t split_k = 2;
  double beta = 1.0;
  std::size_t n_target_samples = 100;
};

/// Everything a pipeline run depends on. Every field has a default, so an
/// empty JSON document is a valid configuration.
///
/// The seeds inside `glyphs` and `training` are ignored: all randomness is
/// derived from `seed`.
struct ExperimentConfig {
  GlyphSpec glyphs;
  /// When set, the source data comes from IDX files instead of the glyph generator.
  std::optional<IdxSource> idx;
  std::vector<std::size_t> hidden{256, 128, 64};
  TrainConfig training{30, 0.05, 32, 1};
  FisherSettings fisher;
  HyperGrid grid;
  CfasConfig cfas;
  SelfSupervisedSettings dira_ss;
  std::vector<DomainSpec> domains = default_domains();
  std::size_t n_target_samples = 50;
  bool balanced_sampling = false;
  std::uint64_t seed = 1;

  /// Every corruption at severity 5.
  static std::vector<DomainSpec> default_domains();

  /// Throws UsageError on the first invalid field. Performs no I/O.
  void validate() const;
};

/// Unknown keys and ill-typed values throw UsageError. Missing keys keep their defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Reads and validates a config file; an empty path yields the defaults.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Progress sink; receives one line at a time without a trailing newline.
using Log = std::function<void(std::string_view)>;

struct SourceData {
  Dataset train;
  Dataset test;
};

SourceData prepare_data(const ExperimentConfig& cfg);

/// Architecture of the source classifier: input -> hidden... -> classes.
Network initial_network(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes);
Network train_source(const ExperimentConfig& cfg, const SourceData& data, const Log& log = {});
FisherDiagonal source_fisher(const ExperimentConfig& cfg, const Network& net, const SourceData& data);

/// Y-model with the source architecture, trained jointly from the same initial weights.
YModel train_y_model(const ExperimentConfig& cfg, const SourceData& data, const Log& log = {});
FisherDiagonal y_model_fisher(const ExperimentConfig& cfg, const YModel& y, const SourceData& data);

/// One target domain: its corrupted test split and the adaptation samples,
/// drawn from that corrupted test split.
struct DomainData {
  DomainSpec spec;
  Dataset test;
  Dataset samples;
  /// Unlabeled images for DIRA-SS (dira_ss.n_target_samples of them).
  ImageSet ss_images;
};

DomainData prepare_domain(const ExperimentConfig& cfg, const SourceData& data, const DomainSpec& spec);

/// Seed of the adaptation sweeps for one domain.
std::uint64_t adaptation_seed(const ExperimentConfig& cfg, const DomainSpec& spec) noexcept;

struct DomainOutcome {
  DomainSpec spec;
  double source_accuracy = 0.0;
  AdaptationReport finetune;
  AdaptationReport dira;
  AdaptationReport dira_ss;
  ParamSet dira_params;
};

struct SweepResult {
  double source_clean_accuracy = 0.0;
  double y_main_accuracy = 0.0;
  double y_rotation_accuracy = 0.0;
  std::vector<DomainOutcome> domains;
  CorruptionTable table;
  /// Across the DIRA-selected models of all domains; empty with fewer than two domains.
  std::optional<VarianceProfile> variance;
  double wall_seconds = 0.0;
};

/// Method names of the table rows.
inline constexpr std::string_view kSourceRow = "Source";
inline constexpr std::string_view kFinetuneRow = "Finetune";
inline constexpr std::string_view kDiraRow = "DIRA";
inline constexpr std::string_view kDiraSsRow = "DIRA-SS";

/// Full pipeline: data, source model, Y-model, Fishers, then finetune, DIRA
/// and DIRA-SS on every configured domain.
SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads, const Log& log = {});

/// Adaptation part of the sweep on already trained models.
SweepResult run_sweep(const ExperimentConfig& cfg, const SourceData& data, const Network& source,
                      const FisherDiagonal& fisher, const YModel& y, const FisherDiagonal& y_fisher,
                      unsigned threads, const Log& log = {});

/// Reproducible result files (table.txt, table.json, reports.json,
/// variance.txt, variance.json, summary.json) plus meta.json, the only file
/// holding timestamps and wall-clock times.
void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Names of the files write_sweep_outputs guarantees to be reproducible.
std::vector<std::string> reproducible_sweep_files();

}  // namespace driftlab
