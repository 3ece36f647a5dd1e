#pragma once

#include <functional>

#include "semivl/tensor.hpp"

namespace semivl {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
/// Throws std::domain_error if f is non-finite at any probe point.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Normwise relative error |a - b| / max(|a|, |b|); 0 when both are below `floor`.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-10);

}  // namespace semivl
