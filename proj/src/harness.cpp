#include "semivl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "semivl/ops.hpp"

namespace semivl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kEvalBatch = 256;

std::string fmt_real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<double> normalized_copy(std::span<const double> w) {
  double peak = 0.0;
  for (double v : w) peak = std::max(peak, std::abs(v));
  std::vector<double> out(w.begin(), w.end());
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  return out;
}

}  // namespace

const std::vector<ReferenceRow>& reference_results() {
  static const std::vector<ReferenceRow> rows = {
      {"unmitigated", kNaN, 0.1244, 0.1244, kNaN},
      {"svm", 1.0, 0.1537, 0.0889, 0.837},
      {"remnet-los*", 1.0, kNaN, 0.0445, kNaN},
      {"remnet-nlos*", 1.0, kNaN, 0.0687, kNaN},
      {"semi-vl", 0.1, 0.0663, 0.0176, 0.242},
      {"semi-vl", 0.2, 0.0603, 0.0164, 0.252},
      {"semi-vl", 0.4, 0.0603, 0.0166, 0.311},
      {"semi-vl", 0.6, 0.0580, 0.0163, 0.210},
      {"semi-vl", 0.8, 0.0567, 0.0151, 0.239},
      {"semi-vl", 1.0, 0.0558, 0.0157, 0.285},
  };
  return rows;
}

ResidualStats residual_stats(std::span<const double> residuals) {
  if (residuals.empty()) throw std::invalid_argument("residual_stats: no residuals");
  double sq = 0.0;
  double ab = 0.0;
  for (double r : residuals) {
    sq += r * r;
    ab += std::abs(r);
  }
  const double n = static_cast<double>(residuals.size());
  return {std::sqrt(sq / n), ab / n};
}

TrainingDiverged::TrainingDiverged(int epoch, std::size_t batch, const std::string& what)
    : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                         ": " + what),
      epoch_(epoch),
      batch_(batch) {}

TrainResult train(const Dataset& data, const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const TrainConfig& tc = config.train;
  const Dataset prepared = tc.normalize ? normalize_waveform(data).data : data;

  TrainResult out;
  out.split = split_supervision(prepared, tc.eta, config.seed);
  std::vector<char> is_labeled(prepared.size(), 0);
  for (std::size_t i : out.split.labeled) is_labeled[i] = 1;

  int start_epoch = 0;
  if (options.resume != nullptr) {
    if (!(options.resume->config.arch == config.arch)) {
      throw std::invalid_argument("train: checkpoint architecture differs from the configured one");
    }
    out.params = options.resume->params;
    start_epoch = options.resume->epoch;
    if (options.resume->adam) out.adam = *options.resume->adam;
  } else {
    out.params = init_params(config.arch, config.seed);
  }
  std::vector<Tensor*> flat = out.params.flat();
  if (out.adam.m.empty()) {
    std::vector<Tensor> shapes;
    for (const Tensor* t : flat) shapes.push_back(*t);
    out.adam = AdamState::for_params(shapes, tc.beta1, tc.beta2, tc.adam_eps);
  }
  const std::vector<std::string> names = out.params.flat_names();

  const std::size_t n = prepared.size();
  const std::size_t bs = std::min(tc.batch_size, n);
  for (int epoch = start_epoch + 1; epoch <= tc.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(config.seed, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    Rng noise_rng(config.seed, Stream::kNoise, static_cast<std::uint64_t>(epoch));
    const double lr = lr_at(epoch - 1, tc.lr);

    double sum_total = 0.0, sum_unsup = 0.0, sum_sup = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += bs, ++batch_index) {
      const std::size_t end = std::min(n, begin + bs);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      LossBatch batch{stack_waveforms(prepared, rows), {}};
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (!is_labeled[rows[j]]) continue;
        batch.labels.rows.push_back(j);
        batch.labels.range_error.push_back(*prepared[rows[j]].range_error);
        batch.labels.env_label.push_back(*prepared[rows[j]].env_label);
      }
      const auto noise = draw_noise(noise_rng, rows.size(), config.arch.latent_y, config.arch.latent_z,
                                    config.loss.mc_samples);

      Graph g;
      const BoundModel model = bind(g, out.params, true);
      std::optional<TotalLoss> attempt;
      try {
        attempt.emplace(total_loss(model, batch, noise, config.loss));
      } catch (const std::domain_error& e) {  // NaN reaching sqrt/log inside the forward pass
        throw TrainingDiverged(epoch, batch_index + 1, e.what());
      }
      const TotalLoss& loss = *attempt;
      if (!std::isfinite(loss.breakdown.total)) {
        throw TrainingDiverged(epoch, batch_index + 1, "total loss " + fmt_real(loss.breakdown.total));
      }
      g.backward(scale(loss.total, 1.0 / static_cast<double>(rows.size())));
      const std::vector<Tensor> grads = gradients(g, model);
      std::vector<Tensor> params;
      params.reserve(flat.size());
      for (Tensor* t : flat) params.push_back(std::move(*t));
      try {
        adam_step(params, grads, out.adam, lr, names);
      } catch (const std::domain_error& e) {
        for (std::size_t i = 0; i < flat.size(); ++i) *flat[i] = std::move(params[i]);
        throw TrainingDiverged(epoch, batch_index + 1, e.what());
      }
      for (std::size_t i = 0; i < flat.size(); ++i) *flat[i] = std::move(params[i]);

      sum_total += loss.breakdown.total;
      sum_unsup += loss.breakdown.unsup;
      sum_sup += loss.breakdown.sup;
    }
    const double dn = static_cast<double>(n);
    CurveRow row{epoch, sum_total / dn, sum_unsup / dn, sum_sup / dn, lr};
    out.curve.push_back(row);
    if (options.on_epoch) options.on_epoch(row);

    const bool cadence = tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0;
    if (!options.checkpoint_prefix.empty() && (cadence || epoch == tc.epochs)) {
      save_checkpoint(options.checkpoint_prefix, Checkpoint{config, out.params, epoch, out.adam});
    }
  }
  return out;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& test, bool normalize, const std::string& tag,
                       double eta) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].range_error) {
      throw std::invalid_argument("evaluate: test sample " + std::to_string(i + 1) + " has no ranging error label");
    }
  }
  const Dataset prepared = normalize ? normalize_waveform(test).data : test;
  std::vector<double> residual(test.size());
  std::vector<double> raw(test.size());
  double seconds = 0.0;
  for (std::size_t begin = 0; begin < test.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(test.size(), begin + kEvalBatch);
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const Tensor x = stack_waveforms(prepared, rows);
    Graph g;
    const BoundModel model = bind(g, params, false);
    const auto t0 = std::chrono::steady_clock::now();
    const Var pred = estimate_error(model, encode_y(model, g.constant(x)).mean);
    const auto t1 = std::chrono::steady_clock::now();
    seconds += std::chrono::duration<double>(t1 - t0).count();
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const double truth = *test[rows[j]].range_error;
      residual[rows[j]] = pred.value()[j] - truth;
      raw[rows[j]] = truth;
    }
  }
  MetricsReport r;
  r.tag = tag;
  r.eta = eta;
  const ResidualStats s = residual_stats(residual);
  const ResidualStats u = residual_stats(raw);
  r.rmse = s.rmse;
  r.mae = s.mae;
  r.unmitigated_rmse = u.rmse;
  r.unmitigated_mae = u.mae;
  r.n = test.size();
  r.time_ms = 1000.0 * seconds / static_cast<double>(test.size());
  return r;
}

double mitigate(const ModelParams& params, std::span<const double> waveform, double measured_distance,
                bool normalize) {
  if (waveform.size() != kWaveformLength) {
    throw std::invalid_argument("mitigate: waveform has " + std::to_string(waveform.size()) + " samples, expected " +
                                std::to_string(kWaveformLength));
  }
  std::vector<double> w = normalize ? normalized_copy(waveform) : std::vector<double>(waveform.begin(), waveform.end());
  const Tensor x(Shape{1, kWaveformLength}, std::move(w));
  return measured_distance - predict_error(params, x)[0];
}

namespace {

struct Job {
  RunConfig config;
  std::string tag;
};

std::vector<MetricsReport> run_jobs(const Dataset& train_set, const Dataset& test_set, const std::vector<Job>& jobs,
                                    std::size_t threads) {
  std::vector<MetricsReport> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  auto run = [&](std::size_t i) {
    try {
      const TrainResult tr = train(train_set, jobs[i].config);
      out[i] = evaluate(tr.params, test_set, jobs[i].config.train.normalize, jobs[i].tag, jobs[i].config.train.eta);
      out[i].n_labeled = tr.split.n_labeled();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next == jobs.size()) return;
            i = next++;
          }
          run(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

std::vector<MetricsReport> sweep(const Dataset& train_set, const Dataset& test_set, const RunConfig& config) {
  if (config.sweep_etas.empty()) throw std::invalid_argument("sweep: empty eta list");
  std::vector<Job> jobs;
  for (double eta : config.sweep_etas) {
    Job j{config, "semivl"};
    j.config.train.eta = eta;
    jobs.push_back(std::move(j));
  }
  return run_jobs(train_set, test_set, jobs, config.threads);
}

std::vector<MetricsReport> ablation(const Dataset& train_set, const Dataset& test_set, const RunConfig& config) {
  std::vector<Job> jobs;
  auto tag_of = [](const ArchConfig& a) {
    return "ae=" + std::string(to_string(a.ae_form)) + ";est=" + std::string(to_string(a.est_form));
  };
  if (!config.ablation_vary) {
    Job j{config, ""};
    j.config.train.eta = 1.0;
    j.tag = tag_of(j.config.arch);
    jobs.push_back(std::move(j));
  } else {
    for (LayerForm ae : {LayerForm::kConv1d, LayerForm::kConv2d}) {
      for (LayerForm est : {LayerForm::kLinear, LayerForm::kConv1d, LayerForm::kConv2d}) {
        Job j{config, ""};
        j.config.train.eta = 1.0;
        j.config.arch.ae_form = ae;
        j.config.arch.est_form = est;
        j.tag = tag_of(j.config.arch);
        jobs.push_back(std::move(j));
      }
    }
  }
  return run_jobs(train_set, test_set, jobs, config.threads);
}

void write_curve_csv(std::ostream& out, const LearningCurve& curve) {
  out << "epoch,total,unsup,sup,lr\n";
  for (const CurveRow& r : curve) {
    out << r.epoch << ',' << fmt_real(r.total) << ',' << fmt_real(r.unsup) << ',' << fmt_real(r.sup) << ','
        << fmt_real(r.lr) << '\n';
  }
}

void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_curve_csv(out, curve);
}

LearningCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,total,unsup,sup,lr") throw std::runtime_error(path.string() + ": not a learning-curve file");
  LearningCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    curve.push_back({std::stoi(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                     std::stod(cells[4])});
  }
  return curve;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
  out << "tag,eta,rmse_m,mae_m,time_ms,n\n";
  for (const MetricsReport& r : rows) {
    out << r.tag << ',' << fmt_real(r.eta) << ',' << fmt_real(r.rmse) << ',' << fmt_real(r.mae) << ','
        << fmt_real(r.time_ms) << ',' << r.n << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_metrics_csv(out, rows);
}

std::string format_report(const std::vector<MetricsReport>& rows) {
  std::ostringstream out;
  out << std::fixed;
  auto cell = [&](double v, int prec) {
    std::ostringstream c;
    if (std::isnan(v)) {
      c << "-";
    } else {
      c << std::fixed << std::setprecision(prec) << v;
    }
    return c.str();
  };
  out << std::left << std::setw(28) << "method" << std::setw(6) << "eta" << std::setw(10) << "rmse_m"
      << std::setw(10) << "mae_m" << std::setw(10) << "time_ms" << "n\n";
  if (!rows.empty()) {
    out << std::setw(28) << "unmitigated (live)" << std::setw(6) << "-" << std::setw(10)
        << cell(rows.front().unmitigated_rmse, 4) << std::setw(10) << cell(rows.front().unmitigated_mae, 4)
        << std::setw(10) << "-" << rows.front().n << "\n";
  }
  for (const MetricsReport& r : rows) {
    out << std::setw(28) << r.tag << std::setw(6) << cell(r.eta, 2) << std::setw(10) << cell(r.rmse, 4)
        << std::setw(10) << cell(r.mae, 4) << std::setw(10) << cell(r.time_ms, 4) << r.n << "\n";
  }
  out << "\nliterature values (real corpus, GPU; context only, * = MAE on a subset)\n";
  for (const ReferenceRow& r : reference_results()) {
    out << std::setw(28) << r.method << std::setw(6) << cell(r.eta, 1) << std::setw(10) << cell(r.rmse, 4)
        << std::setw(10) << cell(r.mae, 4) << std::setw(10) << cell(r.time_ms, 3) << "\n";
  }
  return out.str();
}

}  // namespace semivl
