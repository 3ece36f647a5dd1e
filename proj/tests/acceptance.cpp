// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "semivl/checkpoint.hpp"
#include "semivl/config.hpp"
#include "semivl/data.hpp"
#include "semivl/distributions.hpp"
#include "semivl/gradcheck_suite.hpp"
#include "semivl/harness.hpp"
#include "semivl/loss.hpp"
#include "semivl/ops.hpp"

using namespace semivl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  failures += pass ? 0 : 1;
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(5);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto cases = gradcheck_suite();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    if (!(c.rel_error <= worst)) {
      worst = c.rel_error;
      worst_name = c.name;
    }
  }
  report(1, worst < 1e-4 && secs < 120.0,
         std::to_string(cases.size()) + " cases, worst rel err " + fmt(worst) + " (" + worst_name + "), " +
             fmt(secs) + " s");
}

double log_normal(double x, double mean, double var) {
  return -0.5 * std::log(2 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2 * var);
}

void kl_oracle() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> mean_u(-2.0, 2.0), var_u(0.1, 3.0), prior_u(0.5, 2.0);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const double mu = mean_u(rng), var = var_u(rng), prior = prior_u(rng), sd = std::sqrt(var);
    double acc = 0.0;
    constexpr int kDraws = 1'000'000;
    for (int k = 0; k < kDraws / 2; ++k) {
      const double e = n(rng);
      for (double s : {mu + sd * e, mu - sd * e}) acc += log_normal(s, mu, var) - log_normal(s, 0.0, prior);
    }
    const double mc = acc / kDraws;
    const double exact = kl_gaussian_diag({Tensor::vector({mu}), Tensor::vector({var})}, prior);
    worst = std::max(worst, std::abs(mc - exact));
  }
  double min_kl = INFINITY;
  // Half the codes sit near the prior, where the KL approaches zero.
  std::uniform_real_distribution<double> wide_mean(-10.0, 10.0), log_var(-8.0, 4.0), near(-0.05, 0.05);
  for (int c = 0; c < 10000; ++c) {
    const bool close = c % 2 == 0;
    const double prior = std::exp(log_var(rng));
    Tensor m(Shape{8}), v(Shape{8});
    for (double& x : m.storage()) x = close ? near(rng) : wide_mean(rng);
    for (double& x : v.storage()) x = close ? prior * std::exp(near(rng)) : std::exp(log_var(rng));
    min_kl = std::min(min_kl, kl_gaussian_diag({m, v}, prior));
  }
  report(2, worst < 1e-2 && min_kl >= 0.0,
         "max |analytic - MC| " + fmt(worst) + " over 20 codes, min KL " + fmt(min_kl) + " over 10000 codes");
}

double toy_log_evidence(double x) {
  const double lo = -9.0, hi = 9.0;
  const int n = 900;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = lo + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      const double z = lo + (j + 0.5) * h;
      acc += std::exp(log_normal(x, y + z, 1.0) + log_normal(y, 0, 1) + log_normal(z, 0, 1));
    }
  }
  return std::log(acc * h * h);
}

void elbo_bound() {
  const double r = std::sqrt(2.0);
  std::vector<NoisePair> points;
  for (auto [a, b] : {std::pair{r, 0.0}, {-r, 0.0}, {0.0, r}, {0.0, -r}}) {
    points.push_back({Tensor(Shape{1, 1}, {a}), Tensor(Shape{1, 1}, {b})});
  }
  LossConfig cfg;
  cfg.obs_var = 1.0;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mean_u(-3.0, 3.0), log_var(-4.0, 2.0);
  double worst_gap = -INFINITY;
  double at_zero = 0.0;
  for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
    const double evidence = toy_log_evidence(x);
    if (x == 0.0) at_zero = evidence;
    for (int k = 0; k < 100; ++k) {
      Graph g;
      const GaussianCodeVar qy{g.constant(Tensor(Shape{1, 1}, {mean_u(rng)})),
                               g.constant(Tensor(Shape{1, 1}, {std::exp(log_var(rng))}))};
      const GaussianCodeVar qz{g.constant(Tensor(Shape{1, 1}, {mean_u(rng)})),
                               g.constant(Tensor(Shape{1, 1}, {std::exp(log_var(rng))}))};
      const ElboTerms t = elbo_terms(g.constant(Tensor(Shape{1, 1}, {x})), qy, qz,
                                     [](Var y, Var z) { return add(y, z); }, points, cfg);
      worst_gap = std::max(worst_gap, t.elbo.value().item() - evidence);
    }
  }
  report(3, worst_gap <= 1e-6,
         "max elbo - log evidence " + fmt(worst_gap) + " over 500 posteriors, log evidence(0) " + fmt(at_zero));
}

struct DeskRun {
  MetricsReport metrics;
  LearningCurve curve;
  double seconds;
};

// Trains the desk profile at one seed and eta on generated 5000/1000 data.
DeskRun desk_run(std::uint64_t seed, double eta) {
  RunConfig cfg = desk_profile();
  cfg.seed = seed;
  cfg.train.eta = eta;
  SynthConfig s = cfg.synth;
  s.seed = seed;
  s.count = 5000;
  const Dataset train_set = synth_generate(s).samples;
  s.count = 1000;
  const Dataset test_set = synth_generate(s, Stream::kTestGenerate).samples;
  const auto t0 = Clock::now();
  const TrainResult r = train(train_set, cfg);
  MetricsReport m = evaluate(r.params, test_set, cfg.train.normalize, "semivl", eta);
  const double secs = seconds_since(t0);
  std::cout << "  seed " << seed << " eta " << eta << ": mae " << fmt(m.mae) << " rmse " << fmt(m.rmse)
            << " unmitigated mae " << fmt(m.unmitigated_mae) << ", " << fmt(secs) << " s" << std::endl;
  return DeskRun{m, r.curve, secs};
}

void desk_criteria() {
  std::map<std::pair<std::uint64_t, double>, DeskRun> runs;
  for (std::uint64_t seed : {1, 2, 3})
    for (double eta : {1.0, 0.8, 0.1}) runs.emplace(std::pair{seed, eta}, desk_run(seed, eta));

  const DeskRun& full = runs.at({1, 1.0});
  const DeskRun& sparse = runs.at({1, 0.1});
  double slowest = 0.0;
  for (const auto& [key, run] : runs) slowest = std::max(slowest, run.seconds);
  const double base = full.metrics.unmitigated_mae;
  report(4,
         full.metrics.mae <= 0.5 * base && sparse.metrics.mae <= 0.7 * base &&
             std::max(full.seconds, sparse.seconds) < 1200.0,
         "seed 1: eta 1.0 mae " + fmt(full.metrics.mae) + " (<= " + fmt(0.5 * base) + "), eta 0.1 mae " +
             fmt(sparse.metrics.mae) + " (<= " + fmt(0.7 * base) + "), slowest run " + fmt(slowest) + " s");

  auto mean_mae = [&](double eta) {
    double acc = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) acc += runs.at({seed, eta}).metrics.mae;
    return acc / 3.0;
  };
  const double m10 = mean_mae(1.0), m08 = mean_mae(0.8), m01 = mean_mae(0.1);
  report(5, m08 <= 1.2 * m10 && m01 <= 2.0 * m10,
         "mean mae over 3 seeds: eta 1.0 " + fmt(m10) + ", eta 0.8 " + fmt(m08) + " (<= " + fmt(1.2 * m10) +
             "), eta 0.1 " + fmt(m01) + " (<= " + fmt(2.0 * m10) + ")");

  const LearningCurve& c = full.curve;
  const double first = c.front().total, last = c.back().total;
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = c.size() - std::min<std::size_t>(10, c.size()); i < c.size(); ++i) {
    lo = std::min(lo, c[i].total);
    hi = std::max(hi, c[i].total);
  }
  const double drop = first - last;
  report(6, last < 0.5 * first && (hi - lo) < 0.1 * drop,
         "epoch 1 " + fmt(first) + ", epoch " + std::to_string(c.back().epoch) + " " + fmt(last) +
             ", last-10 spread " + fmt(hi - lo) + " vs 10% of drop " + fmt(0.1 * drop));
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "semivl_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = desk_profile();
  cfg.seed = 8;
  cfg.train.epochs = 3;
  cfg.train.eta = 0.5;
  SynthConfig s = cfg.synth;
  s.count = 300;
  s.seed = 8;
  const Dataset data = synth_generate(s).samples;

  std::vector<LearningCurve> curves;
  for (const char* name : {"a", "b"}) {
    TrainOptions opts;
    opts.checkpoint_prefix = dir / name;
    curves.push_back(train(data, cfg, opts).curve);
    write_curve_csv(dir / (std::string(name) + ".csv"), curves.back());
  }
  bool same = curves[0] == curves[1] && slurp(dir / "a.csv") == slurp(dir / "b.csv");
  for (const char* ext : {".manifest", ".bin", ".adam.bin"}) {
    same = same && slurp(dir / ("a" + std::string(ext))) == slurp(dir / ("b" + std::string(ext)));
  }

  cfg.train.epochs = 2;
  cfg.sweep_etas = {0.2, 1.0};
  s.count = 100;
  s.seed = 9;
  const Dataset test = synth_generate(s, Stream::kTestGenerate).samples;
  std::ostringstream t1, t2;
  write_metrics_csv(t1, sweep(data, test, cfg));
  write_metrics_csv(t2, sweep(data, test, cfg));
  // time_ms is a wall-clock measurement; compare everything else.
  auto strip_time = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      cells.erase(cells.begin() + 4);
      for (const auto& x : cells) out += x + ",";
      out += "\n";
    }
    return out;
  };
  const bool sweep_same = strip_time(t1.str()) == strip_time(t2.str());
  report(7, same && sweep_same,
         std::string("train curves and checkpoints ") + (same ? "identical" : "DIFFER") + ", sweep tables " +
             (sweep_same ? "identical" : "DIFFER"));
  fs::remove_all(dir);
}

void round_trips() {
  const fs::path dir = fs::temp_directory_path() / "semivl_acceptance_roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthConfig s;
  s.count = 500;
  s.seed = 21;
  Dataset data = synth_generate(s).samples;
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i].range_error.reset();
    data[i].env_label.reset();
    data[i].material_label.reset();
  }
  write_dataset(dir / "d.csv", data);
  const Dataset back = load_dataset(dir / "d.csv");
  double data_err = 0.0;
  bool labels_ok = back.size() == data.size();
  for (std::size_t i = 0; labels_ok && i < data.size(); ++i) {
    for (std::size_t j = 0; j < data[i].waveform.size(); ++j) {
      data_err = std::max(data_err, std::abs(back[i].waveform[j] - data[i].waveform[j]));
    }
    data_err = std::max(data_err, std::abs(back[i].measured_distance - data[i].measured_distance));
    labels_ok = back[i].env_label == data[i].env_label && back[i].material_label == data[i].material_label &&
                back[i].range_error.has_value() == data[i].range_error.has_value();
    if (labels_ok && data[i].range_error) {
      data_err = std::max(data_err, std::abs(*back[i].range_error - *data[i].range_error));
    }
  }

  Checkpoint ck;
  ck.config = desk_profile();
  ck.params = init_params(ck.config.arch, 4);
  ck.epoch = 7;
  std::vector<Tensor> shapes;
  for (const Tensor* t : ck.params.flat()) shapes.push_back(*t);
  ck.adam = AdamState::for_params(shapes);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Tensor& t : ck.adam->m)
    for (double& v : t.storage()) v = n(rng);
  for (Tensor& t : ck.adam->v)
    for (double& v : t.storage()) v = std::abs(n(rng));
  ck.adam->step = 123;
  save_checkpoint(dir / "ck", ck);
  const Checkpoint ck2 = load_checkpoint(dir / "ck");
  double ck_err = 0.0;
  const auto a = std::as_const(ck.params).flat();
  const auto b = ck2.params.flat();
  bool ck_ok = a.size() == b.size() && ck2.epoch == 7 && ck2.adam && ck2.adam->step == 123 &&
               ck2.config.arch == ck.config.arch;
  for (std::size_t i = 0; ck_ok && i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i]->size(); ++j) {
      ck_err = std::max(ck_err, std::abs((*a[i])[j] - (*b[i])[j]));
      ck_err = std::max(ck_err, std::abs(ck.adam->m[i][j] - ck2.adam->m[i][j]));
      ck_err = std::max(ck_err, std::abs(ck.adam->v[i][j] - ck2.adam->v[i][j]));
    }
  }

  // Corrupt row 4 (line 5 of the file) and expect that row number back.
  std::istringstream in(slurp(dir / "d.csv"));
  std::ostringstream bad;
  std::string line;
  for (int i = 0; std::getline(in, line); ++i) bad << (i == 4 ? line.substr(0, line.find(',')) : line) << "\n";
  std::size_t row = 0;
  try {
    std::istringstream bin(bad.str());
    read_dataset(bin);
  } catch (const DatasetError& e) {
    row = e.row();
  }
  report(8, data_err <= 1e-12 && labels_ok && ck_ok && ck_err <= 1e-12 && row == 4,
         "dataset max err " + fmt(data_err) + ", checkpoint max err " + fmt(ck_err) +
             ", malformed row reported as " + std::to_string(row) + " (expected 4)");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> steps = {gradient_fidelity, kl_oracle, elbo_bound, desk_criteria, determinism,
                                                    round_trips};
  for (const auto& step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "criterion step threw: " << e.what() << std::endl;
    }
  }
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criterion failure(s)") << std::endl;
  return failures == 0 ? 0 : 1;
}
