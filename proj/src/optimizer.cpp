#include "semivl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace semivl {

AdamState AdamState::for_params(std::span<const Tensor> params, double beta1, double beta2, double epsilon) {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam decay rates must lie in (0,1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               std::span<const std::string> names) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string name = k < names.size() ? names[k] : "#" + std::to_string(k);
    if (grads[k].shape() != params[k].shape() || state.m[k].shape() != params[k].shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " + name + ": " +
                                  shape_str(params[k].shape()) + " vs gradient " + shape_str(grads[k].shape()));
    }
    if (!grads[k].all_finite()) {
      throw std::domain_error("adam_step: non-finite gradient for parameter " + name);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const Tensor& g = grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double lr_at(int epoch, const LrSchedule& schedule) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch " + std::to_string(epoch));
  if (!(schedule.base > 0.0) || schedule.halving_period < 1) {
    throw std::invalid_argument("lr_at: schedule needs positive base rate and period");
  }
  return schedule.base * std::pow(0.5, epoch / schedule.halving_period);
}

}  // namespace semivl
