#include "semivl/distributions.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "semivl/ops.hpp"

namespace semivl {

void GaussianCode::validate() const {
  if (mean.shape() != variance.shape()) {
    throw std::invalid_argument("GaussianCode: mean " + shape_str(mean.shape()) + " and variance " +
                                shape_str(variance.shape()) + " differ");
  }
  for (double v : variance.data()) {
    if (!(v > 0.0)) throw std::invalid_argument("GaussianCode: variance entries must be positive");
  }
}

void PriorConfig::validate() const {
  if (!(var_y > 0.0) || !(var_z > 0.0)) throw std::invalid_argument("prior variances must be positive");
}

double kl_gaussian_diag(const GaussianCode& code, double prior_var) {
  code.validate();
  if (!(prior_var > 0.0)) throw std::invalid_argument("kl_gaussian_diag: prior variance must be positive");
  double kl = 0.0;
  for (std::size_t i = 0; i < code.mean.size(); ++i) {
    const double r = code.variance[i] / prior_var;
    kl += r + code.mean[i] * code.mean[i] / prior_var - 1.0 - std::log(r);
  }
  return 0.5 * kl;
}

Tensor reparameterize(const GaussianCode& code, const NoiseDraw& draw) {
  code.validate();
  if (draw.noise.shape() != code.mean.shape()) {
    throw std::invalid_argument("reparameterize: noise " + shape_str(draw.noise.shape()) + " does not match code " +
                                shape_str(code.mean.shape()));
  }
  if (draw.count < 1 || draw.index < 1 || draw.index > draw.count) {
    throw std::invalid_argument("reparameterize: draw index out of range");
  }
  Tensor out(code.mean.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = code.mean[i] + std::sqrt(code.variance[i]) * draw.noise[i];
  }
  return out;
}

double gaussian_log_likelihood(std::span<const double> x, std::span<const double> x_hat, double obs_var) {
  if (x.size() != x_hat.size()) {
    throw std::invalid_argument("gaussian_log_likelihood: length " + std::to_string(x.size()) + " vs " +
                                std::to_string(x_hat.size()));
  }
  if (!(obs_var > 0.0)) throw std::invalid_argument("gaussian_log_likelihood: obs_var must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * obs_var) - sq / (2.0 * obs_var);
}

Var kl_gaussian_diag(const GaussianCodeVar& code, double prior_var) {
  if (!(prior_var > 0.0)) throw std::invalid_argument("kl_gaussian_diag: prior variance must be positive");
  if (code.mean.shape() != code.variance.shape()) {
    throw std::invalid_argument("kl_gaussian_diag: mean and variance shapes differ");
  }
  const double inv = 1.0 / prior_var;
  const double n = static_cast<double>(code.mean.value().size());
  // 0.5 * sum(var/eps + mu^2/eps - 1 - ln var + ln eps)
  Var ratio_terms = sub(scale(add(code.variance, square(code.mean)), inv), log(code.variance));
  return scale(add_scalar(sum(ratio_terms), n * (std::log(prior_var) - 1.0)), 0.5);
}

Var reparameterize(const GaussianCodeVar& code, Var noise) {
  if (noise.shape() != code.mean.shape()) {
    throw std::invalid_argument("reparameterize: noise " + shape_str(noise.shape()) + " does not match code " +
                                shape_str(code.mean.shape()));
  }
  return add(code.mean, mul(sqrt(code.variance), noise));
}

Var gaussian_log_likelihood(Var x, Var x_hat, double obs_var) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("gaussian_log_likelihood: shape " + shape_str(x.shape()) + " vs " +
                                shape_str(x_hat.shape()));
  }
  if (!(obs_var > 0.0)) throw std::invalid_argument("gaussian_log_likelihood: obs_var must be positive");
  const double n = static_cast<double>(x.value().size());
  const double constant = -0.5 * n * std::log(2.0 * std::numbers::pi * obs_var);
  return add_scalar(scale(sum(square(sub(x, x_hat))), -0.5 / obs_var), constant);
}

}  // namespace semivl
