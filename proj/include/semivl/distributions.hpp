#pragma once

#include <span>

#include "semivl/graph.hpp"
#include "semivl/tensor.hpp"

namespace semivl {

/// Diagonal Gaussian N(mean, diag(variance)).
struct GaussianCode {
  Tensor mean;
  Tensor variance;

  void validate() const;
};

/// Isotropic prior variances for the two latents.
struct PriorConfig {
  double var_y = 1.0;
  double var_z = 1.0;

  void validate() const;
};

/// One standard-normal draw used by the reparameterization, index in [1, count].
struct NoiseDraw {
  Tensor noise;
  int index = 1;
  int count = 1;
};

/// KL(N(mean, var) || N(0, prior_var I)) summed over all coordinates.
double kl_gaussian_diag(const GaussianCode& code, double prior_var);

/// mean + sqrt(variance) * noise.
Tensor reparameterize(const GaussianCode& code, const NoiseDraw& draw);

/// log N(x; x_hat, obs_var I).
double gaussian_log_likelihood(std::span<const double> x, std::span<const double> x_hat, double obs_var);

// ---- graph-recorded counterparts -------------------------------------------------

/// Posterior parameters living on a Graph. Encoders emit log-variance; `variance` is exp of it.
struct GaussianCodeVar {
  Var mean;
  Var variance;
};

/// Summed over every element of the (possibly batched) code; shape [1].
Var kl_gaussian_diag(const GaussianCodeVar& code, double prior_var);

/// mean + sqrt(variance) ⊙ noise, differentiable in mean and variance.
Var reparameterize(const GaussianCodeVar& code, Var noise);

/// Sum over rows of log N(x_row; x_hat_row, obs_var I); shape [1].
Var gaussian_log_likelihood(Var x, Var x_hat, double obs_var);

}  // namespace semivl
