#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semivl/tensor.hpp"

namespace semivl {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;  // number of updates applied so far
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zeroed moments shaped like `params`.
  static AdamState for_params(std::span<const Tensor> params, double beta1 = 0.5, double beta2 = 0.999,
                              double epsilon = 1e-8);
};

/// One bias-corrected Adam update, in place. The whole step is rejected (nothing is
/// modified) if any gradient entry is non-finite; the error names the parameter.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               std::span<const std::string> names = {});

/// Step decay: base * 0.5^floor(epoch / period).
struct LrSchedule {
  double base = 2e-4;
  int halving_period = 100;
};

double lr_at(int epoch, const LrSchedule& schedule);

}  // namespace semivl
