#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "driftlab/analysis.hpp"
#include "driftlab/checkpoint.hpp"
#include "driftlab/data.hpp"
#include "driftlab/dira.hpp"
#include "driftlab/dira_ss.hpp"
#include "driftlab/errors.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/experiment.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/rng.hpp"

namespace driftlab::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;

  ExperimentConfig load() const {
    ExperimentConfig cfg = load_experiment_config(config);
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", c.seed, "Root seed for all randomness (overrides the config)");
}

std::string domain_stem(const DomainSpec& d) {
  return std::string(to_string(d.corruption)) + "-" + std::to_string(d.severity);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

SourceData read_source_dir(const fs::path& dir) {
  return {read_dlb(dir / "train.dlb", DatasetRole::source_train), read_dlb(dir / "test.dlb", DatasetRole::source_test)};
}

// ---------------------------------------------------------------------------

struct GenData {
  Common common;
  std::string out;
};

int gen_data(const GenData& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = o.common.load();
  err << "generating source data\n";
  SourceData data = prepare_data(cfg);
  std::vector<DomainData> domains;
  for (const auto& d : cfg.domains) {
    err << "corrupting " << d.name() << "\n";
    domains.push_back(prepare_domain(cfg, data, d));
  }
  const fs::path dir = o.out;
  ensure_dir(dir);
  write_dlb(data.train, dir / "train.dlb");
  write_dlb(data.test, dir / "test.dlb");
  for (const auto& d : domains) {
    const std::string stem = domain_stem(d.spec);
    write_dlb(d.test, dir / (stem + ".test.dlb"));
    write_dlb(d.samples, dir / (stem + ".samples.dlb"));
    // The unlabeled set goes into the same container with all-zero labels;
    // adapt --mode dira-ss never reads that block anyway.
    std::vector<int> zeros(d.ss_images.size(), 0);
    Dataset holder(d.ss_images.image_size(), data.train.num_classes(),
                   {d.ss_images.pixels().begin(), d.ss_images.pixels().end()}, std::move(zeros),
                   DatasetRole::target_samples);
    write_dlb(holder, dir / (stem + ".images.dlb"));
  }
  out << "wrote " << (2 + 3 * domains.size()) << " files to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainSource {
  Common common;
  std::string data;
  std::string out;
  bool y_model = false;
};

int train_source_cmd(const TrainSource& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = o.common.load();
  const SourceData data = read_source_dir(o.data);
  auto log = [&](std::string_view line) { err << line << "\n"; };
  Checkpoint ckpt{Network({{1, 1, Activation::identity}}, 0), std::nullopt, std::nullopt};
  if (o.y_model) {
    YModel y = train_y_model(cfg, data, log);
    out << "main accuracy " << main_accuracy(y, data.test) << "\n";
    out << "rotation accuracy " << rotation_accuracy(y, data.test.images(), derive_seed(cfg.seed, {stream::kEval}))
        << "\n";
    ckpt.model = std::move(y);
  } else {
    Network net = train_source(cfg, data, log);
    out << "clean test accuracy " << accuracy(net, data.test) << "\n";
    ckpt.model = std::move(net);
  }
  save_checkpoint(ckpt, o.out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FisherCmd {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string out;
};

int fisher_cmd(const FisherCmd& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = o.common.load();
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const SourceData data = read_source_dir(o.data);
  err << "estimating Fisher on " << cfg.fisher.n_samples << " samples\n";
  if (ckpt.is_y_model()) {
    const auto& y = std::get<YModel>(ckpt.model);
    ckpt.fisher = y_model_fisher(cfg, y, data);
    ckpt.anchor = AnchorParams(y.adaptable_params());
  } else {
    const auto& net = std::get<Network>(ckpt.model);
    ckpt.fisher = source_fisher(cfg, net, data);
    ckpt.anchor = AnchorParams(net.params());
  }
  save_checkpoint(ckpt, o.out.empty() ? o.checkpoint : o.out);
  out << "fisher over " << ckpt.fisher->values.size() << " parameters from " << ckpt.fisher->sample_count
      << " samples\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Adapt {
  Common common;
  std::string mode = "dira";
  std::string checkpoint;
  std::string target_labeled;
  std::string target_images;
  std::string source_test;
  std::string target_test;
  std::string domain;
  std::string out;
  std::string model_out;
  std::optional<unsigned> threads;
};

int adapt_cmd(const Adapt& o, std::ostream& out, std::ostream& err) {
  const bool ss = o.mode == "dira-ss";
  if (ss) {
    if (o.target_images.empty()) throw UsageError("--mode dira-ss needs --target-images");
    if (!o.target_labeled.empty()) throw UsageError("--mode dira-ss takes --target-images, not --target-labeled");
  } else {
    if (o.target_labeled.empty()) throw UsageError("--mode " + o.mode + " needs a labeled sample file (--target-labeled)");
    if (!o.target_images.empty()) throw UsageError("--target-images is only valid with --mode dira-ss");
  }
  const ExperimentConfig cfg = o.common.load();
  const DomainSpec domain = o.domain.empty() ? DomainSpec{} : DomainSpec::parse(o.domain);

  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (!ckpt.fisher || !ckpt.anchor) throw UsageError("checkpoint has no Fisher block; run the fisher command first");
  if (ss != ckpt.is_y_model()) {
    throw UsageError(ss ? "--mode dira-ss needs a Y-model checkpoint (train-source --y-model)"
                        : "--mode " + o.mode + " needs a plain network checkpoint");
  }
  const Dataset source_test = read_dlb(o.source_test, DatasetRole::source_test);
  std::optional<Dataset> target_test;
  if (!o.target_test.empty()) target_test = read_dlb(o.target_test, DatasetRole::target);

  AdaptOptions opt;
  opt.threads = o.threads.value_or(threads_from_env());
  opt.target_test = target_test ? &*target_test : nullptr;
  opt.domain = domain;
  const std::uint64_t seed = o.domain.empty() ? derive_seed(cfg.seed, {stream::kCandidate}) : adaptation_seed(cfg, domain);

  AdaptationReport report;
  Checkpoint adapted = ckpt;
  if (ss) {
    const ImageSet images = read_dlb_images(o.target_images);
    err << "dira-ss sweep over " << cfg.grid.size() << " candidates on " << images.size() << " images\n";
    opt.method = "dira-ss";
    auto r = adapt_self_supervised(std::get<YModel>(ckpt.model), *ckpt.anchor, *ckpt.fisher, images, source_test,
                                   cfg.grid, cfg.cfas, seed, opt);
    report = std::move(r.report);
    adapted.model = std::move(r.model);
  } else {
    const Dataset samples = read_dlb(o.target_labeled, DatasetRole::target_samples);
    const auto& net = std::get<Network>(ckpt.model);
    err << o.mode << " sweep on " << samples.size() << " labeled samples\n";
    auto r = o.mode == "finetune"
                 ? adapt_finetune(net, *ckpt.anchor, *ckpt.fisher, samples, source_test, cfg.grid, cfg.cfas, seed, opt)
                 : adapt_supervised(net, *ckpt.anchor, *ckpt.fisher, samples, source_test, cfg.grid, cfg.cfas, seed,
                                    opt);
    report = std::move(r.report);
    adapted.model = std::move(r.model);
  }
  if (!o.out.empty()) {
    write_text(o.out, to_json(report).dump(2) + "\n");
  }
  out << render_text(report);
  if (!o.model_out.empty()) save_checkpoint(adapted, o.model_out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Eval {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string domain;
};

int eval_cmd(const Eval& o, std::ostream& out, std::ostream&) {
  const ExperimentConfig cfg = o.common.load();
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  Dataset data = read_dlb(o.data, DatasetRole::target);
  if (!o.domain.empty()) {
    const DomainSpec d = DomainSpec::parse(o.domain);
    data = corrupt(data, d, derive_seed(cfg.seed, {stream::kCorrupt}));
  }
  if (ckpt.is_y_model()) {
    const auto& y = std::get<YModel>(ckpt.model);
    out << "main accuracy " << main_accuracy(y, data) << "\n";
    out << "rotation accuracy " << rotation_accuracy(y, data.images(), derive_seed(cfg.seed, {stream::kEval}))
        << "\n";
  } else {
    out << "accuracy " << accuracy(std::get<Network>(ckpt.model), data) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Sweep {
  Common common;
  std::string out;
  std::optional<unsigned> threads;
};

int sweep_cmd(const Sweep& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = o.common.load();
  const unsigned threads = o.threads.value_or(threads_from_env());
  SweepResult r = run_sweep(cfg, threads, [&](std::string_view line) { err << line << "\n"; });
  if (!o.out.empty()) write_sweep_outputs(r, cfg, o.out);
  out << render_text(r.table);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Variance {
  std::vector<std::string> checkpoints;
  std::optional<std::size_t> sample_count;
  std::string out;
};

int variance_cmd(const Variance& o, std::ostream& out, std::ostream&) {
  if (o.checkpoints.size() < 2) throw UsageError("variance needs at least two checkpoints");
  std::vector<ParamSet> models;
  for (const auto& path : o.checkpoints) {
    const Checkpoint c = load_checkpoint(path);
    models.push_back(c.is_y_model() ? std::get<YModel>(c.model).main_path().params()
                                    : std::get<Network>(c.model).params());
  }
  const VarianceProfile profile = layer_variance(models, o.sample_count);
  if (!o.out.empty()) write_text(o.out, to_json(profile).dump(2) + "\n");
  out << render_text(profile);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-sample domain adaptation with EWC-regularized retraining", "driftlab"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the glyph dataset and corrupted target files");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainSource ts;
  auto* ts_cmd = app.add_subcommand("train-source", "Train the source model (or the Y-model with --y-model)");
  add_common(ts_cmd, ts.common);
  ts_cmd->add_option("--data", ts.data, "Directory holding train.dlb and test.dlb")->required();
  ts_cmd->add_option("--out", ts.out, "Checkpoint to write")->required();
  ts_cmd->add_flag("--y-model", ts.y_model, "Train a Y-model jointly with the rotation task");

  FisherCmd fc;
  auto* fisher_app = app.add_subcommand("fisher", "Attach the Fisher diagonal and anchor to a checkpoint");
  add_common(fisher_app, fc.common);
  fisher_app->add_option("--checkpoint", fc.checkpoint, "Source checkpoint")->required();
  fisher_app->add_option("--data", fc.data, "Directory holding train.dlb and test.dlb")->required();
  fisher_app->add_option("--out", fc.out, "Checkpoint to write (default: overwrite the input)");

  Adapt ad;
  auto* ad_cmd = app.add_subcommand("adapt", "Adapt a source checkpoint to a target domain");
  add_common(ad_cmd, ad.common);
  ad_cmd->add_option("--mode", ad.mode, "dira, dira-ss or finetune")
      ->check(CLI::IsMember({"dira", "dira-ss", "finetune"}));
  ad_cmd->add_option("--checkpoint", ad.checkpoint, "Checkpoint with Fisher block")->required();
  ad_cmd->add_option("--target-labeled", ad.target_labeled, "Labeled target samples (dira, finetune)");
  ad_cmd->add_option("--target-images", ad.target_images, "Target images; labels are never read (dira-ss)");
  ad_cmd->add_option("--source-test", ad.source_test, "Clean source test split for A_0")->required();
  ad_cmd->add_option("--target-test", ad.target_test, "Corrupted test split for the offline accuracy column");
  ad_cmd->add_option("--domain", ad.domain, "Domain name recorded in the report, e.g. gaussian_noise:5");
  ad_cmd->add_option("--out", ad.out, "Report JSON to write");
  ad_cmd->add_option("--model-out", ad.model_out, "Checkpoint of the selected model");
  ad_cmd->add_option("--threads", ad.threads, "Worker threads (default: DRIFTLAB_THREADS)");

  Eval ev;
  auto* ev_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on a labeled DLB file");
  add_common(ev_cmd, ev.common);
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "Labeled DLB file")->required();
  ev_cmd->add_option("--domain", ev.domain, "Corrupt the data with this domain first");

  Sweep sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Full pipeline over every configured domain");
  add_common(sw_cmd, sw.common);
  sw_cmd->add_option("--out", sw.out, "Directory for the result files");
  sw_cmd->add_option("--threads", sw.threads, "Worker threads (default: DRIFTLAB_THREADS)");

  Variance va;
  auto* va_cmd = app.add_subcommand("variance", "Per-layer parameter variance across checkpoints");
  va_cmd->add_option("--checkpoints", va.checkpoints, "Two or more checkpoints")->required();
  va_cmd->add_option("--sample-count", va.sample_count, "Grouping key recorded in the profile");
  va_cmd->add_option("--out", va.out, "Profile JSON to write");

  std::vector<std::string> argv_store{"driftlab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(gen_cmd)) return gen_data(gen, out, err);
    if (app.got_subcommand(ts_cmd)) return train_source_cmd(ts, out, err);
    if (app.got_subcommand(fisher_app)) return fisher_cmd(fc, out, err);
    if (app.got_subcommand(ad_cmd)) return adapt_cmd(ad, out, err);
    if (app.got_subcommand(ev_cmd)) return eval_cmd(ev, out, err);
    if (app.got_subcommand(sw_cmd)) return sweep_cmd(sw, out, err);
    if (app.got_subcommand(va_cmd)) return variance_cmd(va, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const AdaptationError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace driftlab::cli
