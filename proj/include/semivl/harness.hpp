#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semivl/checkpoint.hpp"
#include "semivl/config.hpp"
#include "semivl/data.hpp"

namespace semivl {

/// Per-epoch means over training samples.
struct CurveRow {
  int epoch = 0;
  double total = 0.0;
  double unsup = 0.0;
  double sup = 0.0;
  double lr = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

using LearningCurve = std::vector<CurveRow>;

/// Published figures kept for context next to live results. Missing entries are NaN.
struct ReferenceRow {
  std::string method;
  double eta;
  double rmse;
  double mae;
  double time_ms;
};

const std::vector<ReferenceRow>& reference_results();

struct MetricsReport {
  std::string tag;
  double eta = 1.0;
  double rmse = 0.0;  // meters
  double mae = 0.0;   // meters
  double time_ms = 0.0;  // per sample, encoder y + estimator only
  std::size_t n = 0;
  double unmitigated_rmse = 0.0;  // predicting zero error
  double unmitigated_mae = 0.0;
  std::size_t n_labeled = 0;  // training rows that carried labels
};

/// Residual statistics: sqrt(mean r^2) and mean |r|.
struct ResidualStats {
  double rmse;
  double mae;
};
ResidualStats residual_stats(std::span<const double> residuals);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::size_t batch, const std::string& what);
  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

struct TrainOptions {
  std::filesystem::path checkpoint_prefix;  // empty: no checkpoints
  const Checkpoint* resume = nullptr;       // continue from this state
  std::function<void(const CurveRow&)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  LearningCurve curve;  // epochs run by this call
  AdamState adam;
  SupervisionSplit split;
};

/// Runs `config.train.epochs` epochs of mixed-batch training. Shuffle order, Monte-Carlo noise,
/// supervision split and initial weights all derive from `config.seed`, so a resumed run
/// reproduces an uninterrupted one. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const Dataset& data, const RunConfig& config, const TrainOptions& options = {});

/// Every sample must carry a ranging error.
MetricsReport evaluate(const ModelParams& params, const Dataset& test, bool normalize = true,
                       const std::string& tag = "semivl", double eta = 1.0);

/// measured_distance minus the predicted ranging error.
double mitigate(const ModelParams& params, std::span<const double> waveform, double measured_distance,
                bool normalize = true);

/// One train+evaluate per eta in config.sweep_etas.
std::vector<MetricsReport> sweep(const Dataset& train_set, const Dataset& test_set, const RunConfig& config);
/// Every autoencoder x estimator layer-form pair (linear estimator included) at eta = 1
/// Layer forms of the autoencoder and estimator varied one at a time at eta = 1
/// (a single default row when config.ablation_vary is false).
std::vector<MetricsReport> ablation(const Dataset& train_set, const Dataset& test_set, const RunConfig& config);

void write_curve_csv(std::ostream& out, const LearningCurve& curve);
void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve);
LearningCurve read_curve_csv(const std::filesystem::path& path);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows);

/// Human-readable table with live baselines and the reference block.
std::string format_report(const std::vector<MetricsReport>& rows);

}  // namespace semivl
