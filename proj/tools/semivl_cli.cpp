// semivl: data generation, training, evaluation, sweeps, ablation and gradient checks.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "semivl/checkpoint.hpp"
#include "semivl/config.hpp"
#include "semivl/data.hpp"
#include "semivl/gradcheck_suite.hpp"
#include "semivl/harness.hpp"

namespace fs = std::filesystem;
using namespace semivl;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string out = ".";
  std::string profile = "full";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--profile", c.profile, "base settings before --config: full or desk")
      ->check(CLI::IsMember({"full", "desk"}))
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "overrides the seed key");
  cmd->add_option("--set", c.sets, "KEY=VALUE override (repeatable)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.profile == "desk" ? desk_profile() : RunConfig{};
  try {
    if (!c.config_path.empty()) cfg = apply_key_values(cfg, read_key_values(c.config_path));
    KeyValues overrides;
    for (const std::string& s : c.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects KEY=VALUE, got '" + s + "'");
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg = apply_key_values(cfg, overrides);
    if (c.seed) cfg.seed = *c.seed;
    cfg.synth.seed = cfg.seed;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Records one command invocation: resolved snapshot, timestamps and outputs.
class RunManifest {
 public:
  RunManifest(std::string command, const Common& common, const RunConfig& cfg)
      : command_(std::move(command)), common_(common), cfg_(cfg), started_(timestamp()) {
    fs::create_directories(common_.out);
  }

  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write() const {
    const fs::path dir(common_.out);
    const fs::path snapshot = dir / "config_snapshot.cfg";
    {
      std::ofstream s(snapshot);
      s << format_key_values(to_key_values(cfg_));
    }
    std::ofstream m(dir / "run_manifest.txt");
    m << "command=" << command_ << "\n";
    m << "config_path=" << common_.config_path << "\n";
    m << "profile=" << common_.profile << "\n";
    m << "snapshot=" << snapshot.string() << "\n";
    m << "seed=" << cfg_.seed << "\n";
    m << "started=" << started_ << "\n";
    m << "finished=" << timestamp() << "\n";
    for (std::size_t i = 0; i < outputs_.size(); ++i) m << "output." << i << "=" << outputs_[i] << "\n";
  }

 private:
  std::string command_;
  Common common_;
  RunConfig cfg_;
  std::string started_;
  std::vector<std::string> outputs_;
};

LabelSpace labels_of(const RunConfig& cfg) { return LabelSpace{cfg.synth.rooms, cfg.synth.materials}; }

Dataset load_or_fail(const std::string& path, const RunConfig& cfg, const char* what) {
  if (path.empty()) throw UsageError(std::string("no ") + what + " dataset given (set data." +
                                     (std::string(what) == "training" ? "train" : "test") + " or pass --dataset)");
  if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " dataset not found: " + path);
  return load_dataset(path, labels_of(cfg));
}

/// Training rows and test rows per the data.* keys.
std::pair<Dataset, Dataset> train_test(const RunConfig& cfg) {
  Dataset train_set = load_or_fail(cfg.dataset, cfg, "training");
  if (!cfg.test_dataset.empty()) return {std::move(train_set), load_or_fail(cfg.test_dataset, cfg, "test")};
  if (cfg.test_room < 0) {
    Dataset test = train_set;
    return {std::move(train_set), std::move(test)};
  }
  auto [others, room] = split_by_room(train_set, static_cast<std::size_t>(cfg.test_room));
  if (room.empty()) throw std::runtime_error("held-out room " + std::to_string(cfg.test_room) + " has no samples");
  return {std::move(others), std::move(room)};
}

int cmd_generate(const Common& common) {
  const RunConfig cfg = resolve(common);
  RunManifest manifest("generate", common, cfg);
  const fs::path train_path = fs::path(common.out) / "train.csv";
  write_dataset(train_path, synth_generate(cfg.synth).samples);
  manifest.output(train_path);
  std::cout << "wrote " << cfg.synth.count << " samples to " << train_path.string() << "\n";
  if (cfg.synth_test_count > 0) {
    SynthConfig t = cfg.synth;
    t.count = cfg.synth_test_count;
    const fs::path test_path = fs::path(common.out) / "test.csv";
    write_dataset(test_path, synth_generate(t, Stream::kTestGenerate).samples);
    manifest.output(test_path);
    std::cout << "wrote " << t.count << " samples to " << test_path.string() << "\n";
  }
  manifest.write();
  return 0;
}

int cmd_train(const Common& common, const std::string& dataset, const std::string& resume, bool quiet) {
  RunConfig cfg = resolve(common);
  if (!dataset.empty()) cfg.dataset = dataset;
  std::optional<Checkpoint> from;
  if (!resume.empty()) {
    from = load_checkpoint(resume);
    if (!(from->config.arch == cfg.arch)) throw UsageError("--resume: checkpoint architecture differs from the config");
  }
  auto [train_set, test_set] = train_test(cfg);
  (void)test_set;
  RunManifest manifest("train", common, cfg);
  const fs::path prefix = fs::path(common.out) / "checkpoint";
  const fs::path curve_path = fs::path(common.out) / "curve.csv";
  TrainOptions opts;
  opts.checkpoint_prefix = prefix;
  opts.resume = from ? &*from : nullptr;
  if (!quiet) {
    opts.on_epoch = [](const CurveRow& r) {
      std::cerr << "epoch " << r.epoch << " total " << r.total << " unsup " << r.unsup << " sup " << r.sup
                << " lr " << r.lr << "\n";
    };
  }
  const TrainResult result = train(train_set, cfg, opts);
  write_curve_csv(curve_path, result.curve);
  manifest.output(prefix.string() + ".manifest");
  manifest.output(prefix.string() + ".bin");
  manifest.output(curve_path);
  manifest.write();
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& dataset) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = ckpt.config;
  const bool has_config = !common.config_path.empty() || !common.sets.empty();
  if (has_config) {
    cfg = resolve(common);
    if (!(cfg.arch == ckpt.config.arch)) throw UsageError("checkpoint architecture differs from the given config");
  }
  Dataset test;
  if (!dataset.empty()) {
    test = load_or_fail(dataset, cfg, "test");
  } else {
    test = train_test(cfg).second;
  }
  RunManifest manifest("eval", common, cfg);
  const MetricsReport r = evaluate(ckpt.params, test, cfg.train.normalize, "semivl", cfg.train.eta);
  const fs::path metrics = fs::path(common.out) / "metrics.csv";
  write_metrics_csv(metrics, {r});
  write_metrics_csv(std::cout, {r});
  manifest.output(metrics);
  manifest.write();
  return 0;
}

int cmd_table(const Common& common, bool is_sweep, const std::string& dataset) {
  RunConfig cfg = resolve(common);
  if (!dataset.empty()) cfg.dataset = dataset;
  auto [train_set, test_set] = train_test(cfg);
  RunManifest manifest(is_sweep ? "sweep" : "ablation", common, cfg);
  const auto rows = is_sweep ? sweep(train_set, test_set, cfg) : ablation(train_set, test_set, cfg);
  const fs::path metrics = fs::path(common.out) / "metrics.csv";
  write_metrics_csv(metrics, rows);
  std::cout << format_report(rows);
  manifest.output(metrics);
  manifest.write();
  return 0;
}

int cmd_gradcheck(const Common& common) {
  const RunConfig cfg = resolve(common);
  RunManifest manifest("gradcheck", common, cfg);
  constexpr double kTolerance = 1e-4;
  int failures = 0;
  const fs::path report = fs::path(common.out) / "gradcheck.txt";
  std::ofstream out(report);
  for (const GradcheckCase& c : gradcheck_suite(cfg.seed)) {
    const bool ok = c.rel_error < kTolerance;
    failures += ok ? 0 : 1;
    std::ostringstream line;
    line << (ok ? "ok   " : "FAIL ") << c.name << " rel_err=" << c.rel_error << "\n";
    std::cout << line.str();
    out << line.str();
  }
  std::cout << (failures == 0 ? "all gradients match" : std::to_string(failures) + " gradient check(s) failed") << "\n";
  manifest.output(report);
  manifest.write();
  return failures == 0 ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised variational ranging-error mitigation for UWB waveforms"};
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key and exit");

  Common common;
  std::string dataset, checkpoint, resume;
  bool quiet = false;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset (train.csv, optional test.csv)");
  add_common(gen, common);
  auto* tr = app.add_subcommand("train", "train and write checkpoint.* and curve.csv");
  add_common(tr, common);
  tr->add_option("--dataset", dataset, "training data (overrides data.train)");
  tr->add_option("--resume", resume, "checkpoint prefix to continue from");
  tr->add_flag("--quiet", quiet, "no per-epoch progress");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and write metrics.csv");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
  ev->add_option("--dataset", dataset, "labeled test data");
  auto* sw = app.add_subcommand("sweep", "train and evaluate once per supervision rate");
  add_common(sw, common);
  sw->add_option("--dataset", dataset, "training data (overrides data.train)");
  auto* ab = app.add_subcommand("ablation", "train and evaluate per layer-form combination");
  add_common(ab, common);
  ab->add_option("--dataset", dataset, "training data (overrides data.train)");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gc, common);

  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }
  if (list_keys) {
    for (const auto& d : config_key_docs()) std::cout << d.key << "\t" << d.doc << "\n";
    return 0;
  }
  try {
    if (gen->parsed()) return cmd_generate(common);
    if (tr->parsed()) return cmd_train(common, dataset, resume, quiet);
    if (ev->parsed()) return cmd_eval(common, checkpoint, dataset);
    if (sw->parsed()) return cmd_table(common, true, dataset);
    if (ab->parsed()) return cmd_table(common, false, dataset);
    if (gc->parsed()) return cmd_gradcheck(common);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
