#include "driftlab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <utility>

#include "driftlab/errors.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

namespace {

using nlohmann::json;

// Extra stream tags local to the pipeline.
constexpr std::uint64_t kSsSample = 0x73736d70;  // "ssmp"
constexpr std::uint64_t kJoint = 0x6a6f696e;     // "join"

void require_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw UsageError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw UsageError("unknown config key '" + std::string(where) + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, std::string_view where) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + std::string(where) + "." + std::string(key) + "' has the wrong type");
  }
}

std::uint64_t domain_key(const DomainSpec& spec) noexcept {
  return static_cast<std::uint64_t>(spec.corruption) * 16 + static_cast<std::uint64_t>(spec.severity);
}

void say(const Log& log, const std::string& line) {
  if (log) log(line);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

double selected_target_test(const AdaptationReport& r) {
  const auto& c = select_best(r);
  return c.target_test_accuracy.value_or(0.0);
}

}  // namespace

std::vector<DomainSpec> ExperimentConfig::default_domains() {
  std::vector<DomainSpec> out;
  for (auto c : all_corruptions()) out.push_back({c, 5});
  return out;
}

void ExperimentConfig::validate() const {
  if (!idx) glyphs.validate();
  if (hidden.empty()) throw UsageError("architecture needs at least one hidden layer");
  for (auto w : hidden) {
    if (w == 0) throw UsageError("hidden layer widths must be positive");
  }
  if (training.epochs == 0) throw UsageError("training.epochs must be positive");
  if (!(training.learning_rate > 0.0)) throw UsageError("training.learning_rate must be positive");
  if (training.batch_size == 0) throw UsageError("training.batch_size must be positive");
  if (fisher.n_samples == 0) throw UsageError("fisher.n_samples must be positive");
  grid.validate();
  cfas.validate();
  JointLossConfig{dira_ss.beta}.validate();
  const std::size_t depth = hidden.size() + 1;
  if (dira_ss.split_k < 1 || dira_ss.split_k >= depth) {
    throw UsageError("dira_ss.split_k must lie in [1, " + std::to_string(depth - 1) + "]");
  }
  if (dira_ss.n_target_samples == 0) throw UsageError("dira_ss.n_target_samples must be positive");
  if (domains.empty()) throw UsageError("at least one domain is required");
  std::set<std::string> seen;
  for (const auto& d : domains) {
    d.validate();
    if (d.corruption == Corruption::none) throw UsageError("'none' is not a target domain");
    if (!seen.insert(d.name()).second) throw UsageError("duplicate domain " + d.name());
  }
  if (n_target_samples == 0) throw UsageError("n_target_samples must be positive");
  if (!idx) {
    const std::size_t test_size = glyphs.classes * (glyphs.samples_per_class - glyphs.samples_per_class * 4 / 5);
    const std::size_t train_size = glyphs.classes * glyphs.samples_per_class - test_size;
    if (n_target_samples > test_size || dira_ss.n_target_samples > test_size) {
      throw UsageError("more target samples requested than the test split holds");
    }
    if (fisher.n_samples > train_size) throw UsageError("fisher.n_samples exceeds the training split");
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  require_keys(j, "config",
               {"glyphs", "idx", "architecture", "training", "fisher", "grid", "cfas", "dira_ss", "domains",
                "n_target_samples", "balanced_sampling", "seed"});
  if (auto it = j.find("glyphs"); it != j.end()) {
    require_keys(*it, "glyphs",
                 {"image_size", "classes", "samples_per_class", "max_shift", "scales", "intensity_min",
                  "intensity_max"});
    read(*it, "image_size", cfg.glyphs.image_size, "glyphs");
    read(*it, "classes", cfg.glyphs.classes, "glyphs");
    read(*it, "samples_per_class", cfg.glyphs.samples_per_class, "glyphs");
    read(*it, "max_shift", cfg.glyphs.max_shift, "glyphs");
    read(*it, "scales", cfg.glyphs.scales, "glyphs");
    read(*it, "intensity_min", cfg.glyphs.intensity_min, "glyphs");
    read(*it, "intensity_max", cfg.glyphs.intensity_max, "glyphs");
  }
  if (auto it = j.find("idx"); it != j.end() && !it->is_null()) {
    require_keys(*it, "idx", {"train_images", "train_labels", "test_images", "test_labels"});
    IdxSource src;
    std::string s;
    for (auto [key, field] : {std::pair{"train_images", &src.train_images}, {"train_labels", &src.train_labels},
                              {"test_images", &src.test_images}, {"test_labels", &src.test_labels}}) {
      if (!it->contains(key)) throw UsageError(std::string("idx.") + key + " is required");
      read(*it, key, s, "idx");
      *field = s;
    }
    cfg.idx = std::move(src);
  }
  if (auto it = j.find("architecture"); it != j.end()) {
    require_keys(*it, "architecture", {"hidden"});
    read(*it, "hidden", cfg.hidden, "architecture");
  }
  if (auto it = j.find("training"); it != j.end()) {
    require_keys(*it, "training", {"epochs", "learning_rate", "batch_size"});
    read(*it, "epochs", cfg.training.epochs, "training");
    read(*it, "learning_rate", cfg.training.learning_rate, "training");
    read(*it, "batch_size", cfg.training.batch_size, "training");
  }
  if (auto it = j.find("fisher"); it != j.end()) {
    require_keys(*it, "fisher", {"n_samples", "label_mode", "ss_mode"});
    read(*it, "n_samples", cfg.fisher.n_samples, "fisher");
    std::string mode;
    if (it->contains("label_mode")) {
      read(*it, "label_mode", mode, "fisher");
      cfg.fisher.label_mode = parse_fisher_label_mode(mode);
    }
    if (it->contains("ss_mode")) {
      read(*it, "ss_mode", mode, "fisher");
      cfg.fisher.ss_mode = parse_ss_fisher_mode(mode);
    }
  }
  if (auto it = j.find("grid"); it != j.end()) {
    require_keys(*it, "grid", {"lambdas", "learning_rates", "steps", "batch_size"});
    read(*it, "lambdas", cfg.grid.lambdas, "grid");
    read(*it, "learning_rates", cfg.grid.learning_rates, "grid");
    read(*it, "steps", cfg.grid.steps, "grid");
    read(*it, "batch_size", cfg.grid.batch_size, "grid");
  }
  if (auto it = j.find("cfas"); it != j.end()) {
    require_keys(*it, "cfas", {"zeta"});
    read(*it, "zeta", cfg.cfas.zeta, "cfas");
  }
  if (auto it = j.find("dira_ss"); it != j.end()) {
    require_keys(*it, "dira_ss", {"split_k", "beta", "n_target_samples"});
    read(*it, "split_k", cfg.dira_ss.split_k, "dira_ss");
    read(*it, "beta", cfg.dira_ss.beta, "dira_ss");
    read(*it, "n_target_samples", cfg.dira_ss.n_target_samples, "dira_ss");
  }
  if (auto it = j.find("domains"); it != j.end()) {
    std::vector<std::string> names;
    read(j, "domains", names, "config");
    cfg.domains.clear();
    for (const auto& n : names) cfg.domains.push_back(DomainSpec::parse(n));
  }
  read(j, "n_target_samples", cfg.n_target_samples, "config");
  read(j, "balanced_sampling", cfg.balanced_sampling, "config");
  read(j, "seed", cfg.seed, "config");
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json domains = json::array();
  for (const auto& d : cfg.domains) domains.push_back(d.name());
  json j = {
      {"glyphs",
       {{"image_size", cfg.glyphs.image_size},
        {"classes", cfg.glyphs.classes},
        {"samples_per_class", cfg.glyphs.samples_per_class},
        {"max_shift", cfg.glyphs.max_shift},
        {"scales", cfg.glyphs.scales},
        {"intensity_min", cfg.glyphs.intensity_min},
        {"intensity_max", cfg.glyphs.intensity_max}}},
      {"architecture", {{"hidden", cfg.hidden}}},
      {"training",
       {{"epochs", cfg.training.epochs},
        {"learning_rate", cfg.training.learning_rate},
        {"batch_size", cfg.training.batch_size}}},
      {"fisher",
       {{"n_samples", cfg.fisher.n_samples},
        {"label_mode", to_string(cfg.fisher.label_mode)},
        {"ss_mode", to_string(cfg.fisher.ss_mode)}}},
      {"grid",
       {{"lambdas", cfg.grid.lambdas},
        {"learning_rates", cfg.grid.learning_rates},
        {"steps", cfg.grid.steps},
        {"batch_size", cfg.grid.batch_size}}},
      {"cfas", {{"zeta", cfg.cfas.zeta}}},
      {"dira_ss",
       {{"split_k", cfg.dira_ss.split_k},
        {"beta", cfg.dira_ss.beta},
        {"n_target_samples", cfg.dira_ss.n_target_samples}}},
      {"domains", domains},
      {"n_target_samples", cfg.n_target_samples},
      {"balanced_sampling", cfg.balanced_sampling},
      {"seed", cfg.seed},
  };
  if (cfg.idx) {
    j["idx"] = {{"train_images", cfg.idx->train_images.string()},
                {"train_labels", cfg.idx->train_labels.string()},
                {"test_images", cfg.idx->test_images.string()},
                {"test_labels", cfg.idx->test_labels.string()}};
  }
  return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError("config " + path.string() + " is not valid JSON", e.byte);
    }
    cfg = experiment_config_from_json(j);
  }
  cfg.validate();
  return cfg;
}

SourceData prepare_data(const ExperimentConfig& cfg) {
  if (cfg.idx) {
    return {load_idx(cfg.idx->train_images, cfg.idx->train_labels, DatasetRole::source_train),
            load_idx(cfg.idx->test_images, cfg.idx->test_labels, DatasetRole::source_test)};
  }
  GlyphSpec spec = cfg.glyphs;
  spec.seed = derive_seed(cfg.seed, {stream::kGlyph});
  auto splits = generate_glyphs(spec);
  return {std::move(splits.train), std::move(splits.test)};
}

Network initial_network(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes) {
  return Network::classifier(input_dim, cfg.hidden, classes, derive_seed(cfg.seed, {stream::kInit}));
}

Network train_source(const ExperimentConfig& cfg, const SourceData& data, const Log& log) {
  Network net = initial_network(cfg, data.train.pixels_per_image(), data.train.num_classes());
  TrainConfig tc = cfg.training;
  tc.seed = derive_seed(cfg.seed, {stream::kShuffle});
  return train(std::move(net), data.train, tc, [&](std::size_t epoch, double loss) {
    say(log, fmt("source epoch %zu/%zu loss %.6f", epoch + 1, tc.epochs, loss));
  });
}

FisherDiagonal source_fisher(const ExperimentConfig& cfg, const Network& net, const SourceData& data) {
  return compute_fisher(net, data.train, cfg.fisher.n_samples, derive_seed(cfg.seed, {stream::kFisher}),
                        cfg.fisher.label_mode);
}

YModel train_y_model(const ExperimentConfig& cfg, const SourceData& data, const Log& log) {
  Network base = initial_network(cfg, data.train.pixels_per_image(), data.train.num_classes());
  YModel y = build_y_model(base, cfg.dira_ss.split_k, cfg.seed);
  JointTrainConfig jc{cfg.training.epochs, cfg.training.learning_rate, cfg.training.batch_size,
                      derive_seed(cfg.seed, {kJoint})};
  return pretrain_joint(std::move(y), data.train, JointLossConfig{cfg.dira_ss.beta}, jc,
                        [&](std::size_t epoch, double loss) {
                          say(log, fmt("joint epoch %zu/%zu loss %.6f", epoch + 1, jc.epochs, loss));
                        });
}

FisherDiagonal y_model_fisher(const ExperimentConfig& cfg, const YModel& y, const SourceData& data) {
  return compute_fisher_ss(y, data.train, cfg.fisher.n_samples, derive_seed(cfg.seed, {stream::kFisher, 1}),
                           JointLossConfig{cfg.dira_ss.beta}, cfg.fisher.ss_mode);
}

DomainData prepare_domain(const ExperimentConfig& cfg, const SourceData& data, const DomainSpec& spec) {
  const std::uint64_t key = domain_key(spec);
  Dataset test = corrupt(data.test, spec, derive_seed(cfg.seed, {stream::kCorrupt, key}))
                     .with_role(DatasetRole::target);
  Dataset samples = sample_target_set(test, cfg.n_target_samples, derive_seed(cfg.seed, {stream::kSample, key}),
                                      cfg.balanced_sampling);
  Dataset ss = sample_target_set(test, cfg.dira_ss.n_target_samples, derive_seed(cfg.seed, {kSsSample, key}),
                                 cfg.balanced_sampling);
  return {spec, std::move(test), std::move(samples), ss.images()};
}

std::uint64_t adaptation_seed(const ExperimentConfig& cfg, const DomainSpec& spec) noexcept {
  return derive_seed(cfg.seed, {stream::kCandidate, domain_key(spec)});
}

SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads, const Log& log) {
  cfg.validate();
  say(log, "preparing data");
  SourceData data = prepare_data(cfg);
  say(log, "training source model");
  Network source = train_source(cfg, data, log);
  say(log, "estimating source Fisher");
  FisherDiagonal fisher = source_fisher(cfg, source, data);
  say(log, "training Y-model");
  YModel y = train_y_model(cfg, data, log);
  say(log, "estimating Y-model Fisher");
  FisherDiagonal y_fisher = y_model_fisher(cfg, y, data);
  return run_sweep(cfg, data, source, fisher, y, y_fisher, threads, log);
}

SweepResult run_sweep(const ExperimentConfig& cfg, const SourceData& data, const Network& source,
                      const FisherDiagonal& fisher, const YModel& y, const FisherDiagonal& y_fisher,
                      unsigned threads, const Log& log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  SweepResult result;
  result.source_clean_accuracy = accuracy(source, data.test);
  result.y_main_accuracy = main_accuracy(y, data.test);
  result.y_rotation_accuracy = rotation_accuracy(y, data.test.images(), derive_seed(cfg.seed, {stream::kEval}));
  say(log, fmt("source clean accuracy %.4f, Y-model main %.4f rotation %.4f", result.source_clean_accuracy,
               result.y_main_accuracy, result.y_rotation_accuracy));

  const AnchorParams anchor(source.params());
  const AnchorParams y_anchor(y.adaptable_params());
  std::vector<MethodAccuracies> rows{{std::string(kSourceRow), {}},
                                     {std::string(kFinetuneRow), {}},
                                     {std::string(kDiraRow), {}},
                                     {std::string(kDiraSsRow), {}}};
  std::vector<std::string> columns;
  std::vector<ParamSet> adapted;

  for (const auto& spec : cfg.domains) {
    DomainData dom = prepare_domain(cfg, data, spec);
    const std::uint64_t seed = adaptation_seed(cfg, spec);
    AdaptOptions opt;
    opt.threads = threads;
    opt.target_test = &dom.test;
    opt.domain = spec;

    DomainOutcome out;
    out.spec = spec;
    out.source_accuracy = accuracy(source, dom.test);

    out.finetune =
        adapt_finetune(source, anchor, fisher, dom.samples, data.test, cfg.grid, cfg.cfas, seed, opt).report;
    auto dira = adapt_supervised(source, anchor, fisher, dom.samples, data.test, cfg.grid, cfg.cfas, seed, opt);
    out.dira = std::move(dira.report);
    out.dira_params = dira.model.params();
    opt.method = "dira-ss";
    out.dira_ss = adapt_self_supervised(y, y_anchor, y_fisher, dom.ss_images, data.test, cfg.grid, cfg.cfas, seed,
                                        opt)
                      .report;

    const std::string name = to_string(spec.corruption).data();
    columns.push_back(name);
    rows[0].by_corruption[name] = 100.0 * out.source_accuracy;
    rows[1].by_corruption[name] = 100.0 * selected_target_test(out.finetune);
    rows[2].by_corruption[name] = 100.0 * selected_target_test(out.dira);
    rows[3].by_corruption[name] = 100.0 * selected_target_test(out.dira_ss);
    say(log, fmt("%s: source %.1f finetune %.1f dira %.1f dira-ss %.1f", spec.name().c_str(),
                 rows[0].by_corruption[name], rows[1].by_corruption[name], rows[2].by_corruption[name],
                 rows[3].by_corruption[name]));
    adapted.push_back(out.dira_params);
    result.domains.push_back(std::move(out));
  }

  result.table = corruption_table(rows, columns);
  if (adapted.size() >= 2) result.variance = layer_variance(adapted, cfg.n_target_samples);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<std::string> reproducible_sweep_files() {
  return {"table.txt", "table.json", "reports.json", "variance.txt", "variance.json", "summary.json"};
}

void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json reports = json::array();
  json domains = json::array();
  json meta_reports = json::array();
  for (const auto& d : result.domains) {
    for (const auto* r : {&d.finetune, &d.dira, &d.dira_ss}) {
      reports.push_back(to_json(*r));
      meta_reports.push_back(metadata_json(*r));
    }
    const auto& ft = select_best(d.finetune);
    const auto& di = select_best(d.dira);
    const auto& ss = select_best(d.dira_ss);
    domains.push_back({
        {"domain", d.spec.name()},
        {"source_target_test", d.source_accuracy},
        {"finetune", {{"eta", ft.learning_rate}, {"A_0", ft.source_accuracy}, {"target_test", *ft.target_test_accuracy}}},
        {"dira",
         {{"lambda", di.lambda}, {"eta", di.learning_rate}, {"A_0", di.source_accuracy},
          {"target_test", *di.target_test_accuracy}}},
        {"dira_ss",
         {{"lambda", ss.lambda}, {"eta", ss.learning_rate}, {"A_T", ss.target_accuracy},
          {"A_0", ss.source_accuracy}, {"target_test", *ss.target_test_accuracy}}},
    });
  }
  json summary = {
      {"config", to_json(cfg)},
      {"source_clean_accuracy", result.source_clean_accuracy},
      {"y_main_accuracy", result.y_main_accuracy},
      {"y_rotation_accuracy", result.y_rotation_accuracy},
      {"domains", domains},
  };

  write_text(dir / "table.txt", render_text(result.table));
  write_text(dir / "table.json", to_json(result.table).dump(2) + "\n");
  write_text(dir / "reports.json", reports.dump(1) + "\n");
  if (result.variance) {
    write_text(dir / "variance.txt", render_text(*result.variance));
    write_text(dir / "variance.json", to_json(*result.variance).dump(2) + "\n");
  } else {
    write_text(dir / "variance.txt", "");
    write_text(dir / "variance.json", "null\n");
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json meta = {{"finished_at", stamp}, {"wall_seconds", result.wall_seconds}, {"reports", meta_reports}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace driftlab
