#pragma once

#include <functional>
#include <span>
#include <vector>

#include "semivl/distributions.hpp"
#include "semivl/model.hpp"
#include "semivl/rng.hpp"

namespace semivl {

struct LossConfig {
  double lambda_unsup = 10.0;
  double lambda_sup = 1.0;
  int mc_samples = 1;  // L
  double obs_var = 1.0;
  PriorConfig prior;
  bool heads_use_samples = false;  // heads read posterior means unless set

  void validate() const;
};

/// lambda_unsup * unsup + lambda_sup * sup, evaluated exactly as total_loss records it.
inline double weighted_total(double unsup, double sup, const LossConfig& config) {
  return config.lambda_unsup * unsup + config.lambda_sup * sup;
}

/// Batch sums. total == lambda_unsup * unsup + lambda_sup * sup; unsup == -(recon - kl_y - kl_z).
struct LossBreakdown {
  double total = 0.0;
  double unsup = 0.0;
  double sup = 0.0;
  double recon = 0.0;
  double kl_y = 0.0;
  double kl_z = 0.0;
};

/// Standard-normal draws for one Monte-Carlo sample of both latents, each [B, d].
struct NoisePair {
  Tensor y;
  Tensor z;
};

std::vector<NoisePair> draw_noise(Rng& rng, std::size_t batch, std::size_t latent_y, std::size_t latent_z, int count);

/// Rows of a batch that carry labels, with their targets.
struct LabeledRows {
  std::vector<std::size_t> rows;
  std::vector<double> range_error;
  std::vector<std::size_t> env_label;

  bool empty() const { return rows.empty(); }
};

struct LossBatch {
  Tensor waveforms;  // [B, 157]
  LabeledRows labels;
};

/// Recorded ELBO pieces, each summed over batch rows.
struct ElboTerms {
  Var elbo;
  Var recon;
  Var kl_y;
  Var kl_z;
};

using DecoderFn = std::function<Var(Var y, Var z)>;

/// (1/L) sum_l log p(x | y_l, z_l) - KL(q_y || p_y) - KL(q_z || p_z) with reparameterized draws.
/// Works for any decoder; the model wrapper below plugs in the AdaIN decoder.
ElboTerms elbo_terms(Var x, const GaussianCodeVar& qy, const GaussianCodeVar& qz, const DecoderFn& decoder,
                     std::span<const NoisePair> noise, const LossConfig& config);

ElboTerms elbo(const BoundModel& model, Var x, std::span<const NoisePair> noise, const LossConfig& config);

/// -sum over the union of unlabeled and labeled waveforms of the ELBO. Either batch may be empty,
/// not both. Noise rows follow the concatenation order (unlabeled first).
Var unsupervised_loss(const BoundModel& model, const Tensor* unlabeled, const Tensor* labeled,
                      std::span<const NoisePair> noise, const LossConfig& config);

/// sum_j (f_est(y_j) - dd_j)^2 + ||f_cls(z_j) - onehot(k_j)||^2 over labeled waveforms [N, 157].
/// Heads read posterior means; with heads_use_samples they read the first noise draw.
Var supervised_loss(const BoundModel& model, Var labeled_waveforms, std::span<const double> range_error,
                    std::span<const std::size_t> env_label, const LossConfig& config,
                    std::span<const NoisePair> noise = {});

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

/// lambda_unsup * unsup + lambda_sup * sup over a mixed batch. The supervised term covers
/// labeled rows only and is 0 when there are none.
TotalLoss total_loss(const BoundModel& model, const LossBatch& batch, std::span<const NoisePair> noise,
                     const LossConfig& config);

// Value-level wrappers over a throwaway graph.
double elbo(const ModelParams& params, const Tensor& waveform, std::span<const NoisePair> noise,
            const LossConfig& config);
double supervised_loss(const ModelParams& params, const Tensor& waveforms, std::span<const double> range_error,
                       std::span<const std::size_t> env_label, const LossConfig& config);
LossBreakdown total_loss(const ModelParams& params, const LossBatch& batch, std::span<const NoisePair> noise,
                         const LossConfig& config);

}  // namespace semivl
