#include "fpgen/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fpgen/config.hpp"
#include "fpgen/data_prep.hpp"
#include "fpgen/digest.hpp"
#include "fpgen/error.hpp"
#include "fpgen/eval.hpp"
#include "fpgen/pipeline.hpp"
#include "fpgen/ridge_synth.hpp"
#include "fpgen/sr.hpp"
#include "fpgen/wgan.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string in, out, data, gan, sr, real, synth, manifest;
  std::optional<int> n, max_steps;
  std::string classes;
  std::optional<std::string> models;
  std::string features;
  bool margin_roc = false;
};

void install_logger(const std::string& level) {
  auto logger = spdlog::get("fpgen");
  if (!logger) logger = spdlog::stderr_color_mt("fpgen");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

RunConfig load_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? run_config_from_json(json::object()) : load_run_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.explicit_seeds.clear();
    cfg.propagate_seed();
  }
  install_logger(cfg.log_level);
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!(f << text)) throw Error(ErrorCode::Io, "cannot write " + p.string());
}

void snapshot(const fs::path& out, const std::string& command, const RunConfig& cfg, json args) {
  fs::create_directories(out);
  const json resolved = to_json(cfg);
  const json doc = {{"command", command}, {"args", std::move(args)}, {"config", resolved},
                    {"config_digest", config_digest(resolved)}};
  write_text(out / "resolved_config.json", doc.dump(2) + '\n');
}

int run_preprocess(const Options& o) {
  const RunConfig cfg = load_config(o);
  snapshot(o.out, "preprocess", cfg, {{"in", o.in}, {"out", o.out}});
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.in)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawScan> scans;
  for (const auto& f : files) {
    try {
      scans.push_back(load_raw_scan(f));
    } catch (const Error& e) {
      spdlog::warn("cannot load {}: {}", f.string(), e.what());
    }
  }
  const BuildReport report = build_databases(scans, cfg.preprocess, o.out);
  spdlog::info("{} of {} files written, {} skipped", report.manifest.size(), files.size(),
               files.size() - report.manifest.size());
  return kExitOk;
}

int run_synth(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.n) cfg.synth.n = *o.n;
  if (!o.classes.empty()) cfg.synth.classes = parse_class_list(o.classes);
  cfg.validate();
  snapshot(o.out, "synth-data", cfg, {{"out", o.out}});
  const ClassMix mix = cfg.synth.classes.empty() ? ClassMix{} : ClassMix::restricted_to(cfg.synth.classes);
  const auto manifest = generate_toy_corpus(std::size_t(cfg.synth.n), cfg.synth.config, o.out, mix);
  spdlog::info("wrote {} synthetic training pairs to {}", manifest.size(), o.out);
  return kExitOk;
}

int run_train_gan(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.max_steps) cfg.gan.train.max_steps = *o.max_steps;
  cfg.validate();
  snapshot(o.out, "train-gan", cfg, {{"data", o.data}, {"out", o.out}});
  const DatasetManifest data = read_manifest(o.data);
  std::ofstream telemetry(fs::path(o.out) / "telemetry.jsonl", std::ios::trunc);
  WganSink sink;
  sink.on_step = [&](const WganTelemetry& t) {
    telemetry << json{{"step", t.step}, {"critic_loss", t.critic_loss}, {"gen_loss", t.gen_loss},
                      {"em_estimate", t.em_estimate}}
                     .dump()
              << '\n';
    if (t.step % 50 == 0) spdlog::info("gan step {} critic {:.5f} gen {:.5f}", t.step, t.critic_loss, t.gen_loss);
  };
  sink.on_checkpoint = [&](const Checkpoint& g, const Checkpoint& c) {
    const fs::path dir = fs::path(o.out) / "checkpoints";
    fs::create_directories(dir);
    const std::string stem = "step_" + std::to_string(g.step);
    save_checkpoint(g, dir / (stem + "_generator.ckpt"));
    save_checkpoint(c, dir / (stem + "_critic.ckpt"));
  };
  const WganResult result = train_wgan(data, cfg.gan.generator, cfg.gan.critic, cfg.gan.train, sink);
  save_checkpoint(result.generator, fs::path(o.out) / "generator.ckpt");
  save_checkpoint(result.critic, fs::path(o.out) / "critic.ckpt");
  return kExitOk;
}

int run_train_sr(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.max_steps) cfg.sr.train.max_steps = *o.max_steps;
  cfg.validate();
  snapshot(o.out, "train-sr", cfg, {{"data", o.data}, {"out", o.out}});
  const auto pairs = load_pairs(read_manifest(o.data));
  std::ofstream telemetry(fs::path(o.out) / "telemetry.jsonl", std::ios::trunc);
  SRSink sink;
  sink.on_step = [&](const SRTelemetry& t) {
    telemetry << json{{"step", t.step}, {"l_d", t.l_d}, {"l_g", t.l_g}, {"l1", t.l1}}.dump() << '\n';
    if (t.step % 50 == 0) spdlog::info("sr step {} l_d {:.5f} l_g {:.5f} l1 {:.5f}", t.step, t.l_d, t.l_g, t.l1);
  };
  sink.on_checkpoint = [&](const Checkpoint& g, const Checkpoint& d) {
    const fs::path dir = fs::path(o.out) / "checkpoints";
    fs::create_directories(dir);
    const std::string stem = "step_" + std::to_string(g.step);
    save_checkpoint(g, dir / (stem + "_sr_generator.ckpt"));
    save_checkpoint(d, dir / (stem + "_sr_discriminator.ckpt"));
  };
  const SRResult result = train_sr(pairs, cfg.sr.train, cfg.sr.rrdb, cfg.sr.discriminator, sink);
  save_checkpoint(result.generator, fs::path(o.out) / "sr_generator.ckpt");
  save_checkpoint(result.discriminator, fs::path(o.out) / "sr_discriminator.ckpt");
  return kExitOk;
}

int run_generate(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.n) cfg.generate.n = *o.n;
  cfg.validate();
  snapshot(o.out, "generate", cfg, {{"gan", o.gan}, {"sr", o.sr}, {"out", o.out}});
  GenerationRequest req;
  req.n = cfg.generate.n;
  req.batch_size = cfg.generate.batch_size;
  req.seed = cfg.seed;
  req.gan_checkpoint = o.gan;
  req.sr_checkpoint = o.sr;
  req.out_dir = o.out;
  generate_fingerprints(req);
  return kExitOk;
}

int run_evaluate(const Options& o) {
  RunConfig cfg = load_config(o);
  if (o.models && *o.models == "all") {
    cfg.evaluate.models = ClassifierSpec::canonical_set();
  } else if (o.models) {
    cfg.evaluate.models.clear();
    std::istringstream in(*o.models);
    std::string key;
    try {
      while (std::getline(in, key, ',')) {
        if (!key.empty()) cfg.evaluate.models.push_back(ClassifierSpec::parse(key));
      }
    } catch (const ConfigError& e) {
      throw ConfigError("evaluate." + e.key(), e.message());
    }
  }
  if (!o.features.empty()) {
    if (o.features != "hq" && o.features != "lq") throw ConfigError("evaluate.use_lq", "--features must be hq or lq");
    cfg.evaluate.split.use_lq = o.features == "lq";
  }
  if (o.margin_roc) cfg.evaluate.margin_roc = true;
  cfg.validate();
  snapshot(o.out, "evaluate", cfg, {{"real", o.real}, {"synth", o.synth}, {"out", o.out}});

  const Split split = make_split(read_manifest(o.real), read_manifest(o.synth), cfg.evaluate.split);
  spdlog::info("split: {} train / {} test samples, {} / {} real subjects", split.train.size(), split.test.size(),
               split.real_train_subjects, split.real_test_subjects);
  const EvaluationResult result = run_evaluation(split, cfg.evaluate);
  const ReportBundle bundle = render_report(result.reports, result.curves);
  write_report(bundle, result.reports, o.out);
  std::cout << bundle.table;
  return kExitOk;
}

int run_report(const Options& o) {
  const RunConfig cfg = load_config(o);
  const DatasetManifest m = read_manifest(o.manifest);
  const DiversityReport r = diversity_report(m, cfg.seed);
  const json doc = {{"n", r.n},
                    {"mean_nn_distance", r.mean_nn_distance},
                    {"min_nn_distance", r.min_nn_distance},
                    {"duplicate_count", r.duplicate_count},
                    {"duplicate_threshold", kDuplicateThreshold},
                    {"per_pixel_std_mean", r.per_pixel_std_mean},
                    {"exact", r.exact},
                    {"sample_size", r.sample_size}};
  if (!o.out.empty()) {
    snapshot(o.out, "report", cfg, {{"manifest", o.manifest}, {"out", o.out}});
    write_text(fs::path(o.out) / "diversity.json", doc.dump(2) + '\n');
  }
  std::cout << doc.dump() << '\n';
  return kExitOk;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Two-phase synthetic fingerprint generation and indistinguishability evaluation", "fpgen"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for every RNG domain (overrides the config)");
  };

  auto* pre = app.add_subcommand("preprocess", "segment raw scans into paired HQ/LQ databases");
  pre->add_option("--in", o.in, "directory of grayscale PNG scans")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", o.out, "output directory")->required();
  common(pre);

  auto* syn = app.add_subcommand("synth-data", "render a procedural ridge-pattern corpus");
  syn->add_option("--n", o.n, "number of fingerprints");
  syn->add_option("--classes", o.classes, "comma-separated pattern classes, e.g. W,L,R");
  syn->add_option("--out", o.out, "output directory")->required();
  common(syn);

  auto* gan = app.add_subcommand("train-gan", "train the 64x64 Wasserstein GAN");
  gan->add_option("--data", o.data, "manifest with LQ images")->required()->check(CLI::ExistingFile);
  gan->add_option("--out", o.out, "output directory")->required();
  gan->add_option("--max-steps", o.max_steps, "override gan.train.max_steps");
  common(gan);

  auto* sr = app.add_subcommand("train-sr", "train the 4x super-resolution network");
  sr->add_option("--data", o.data, "manifest with HQ/LQ pairs")->required()->check(CLI::ExistingFile);
  sr->add_option("--out", o.out, "output directory")->required();
  sr->add_option("--max-steps", o.max_steps, "override sr.train.max_steps");
  common(sr);

  auto* gen = app.add_subcommand("generate", "sample 256x256 fingerprints from trained checkpoints");
  gen->add_option("--gan", o.gan, "Phase-1 generator checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--sr", o.sr, "SR generator checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--n", o.n, "number of fingerprints");
  gen->add_option("--out", o.out, "output directory")->required();
  common(gen);

  auto* ev = app.add_subcommand("evaluate", "train the six classifiers to separate real from synthetic");
  ev->add_option("--real", o.real, "manifest of real fingerprints")->required()->check(CLI::ExistingFile);
  ev->add_option("--synth", o.synth, "manifest of synthetic fingerprints")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", o.out, "output directory")->required();
  ev->add_option("--models", o.models, "all, or a comma list of logreg,svm,rf,dnn4,dnn5,dnn8,dnn:W1-W2-...");
  ev->add_option("--features", o.features, "hq (256x256, default) or lq (64x64)");
  ev->add_flag("--margin-roc", o.margin_roc, "also emit a ROC curve from SVM margins");
  common(ev);

  auto* rep = app.add_subcommand("report", "diversity diagnostics for a corpus");
  rep->add_option("--manifest", o.manifest, "corpus manifest")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", o.out, "optional output directory for diversity.json");
  common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (pre->parsed()) return run_preprocess(o);
    if (syn->parsed()) return run_synth(o);
    if (gan->parsed()) return run_train_gan(o);
    if (sr->parsed()) return run_train_sr(o);
    if (gen->parsed()) return run_generate(o);
    if (ev->parsed()) return run_evaluate(o);
    if (rep->parsed()) return run_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error at '" << e.key() << "': " << e.message() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitUsage;
}

}  // namespace fpgen
