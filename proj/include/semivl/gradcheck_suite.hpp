#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semivl/model.hpp"

namespace semivl {

struct GradcheckCase {
  std::string name;
  double rel_error;
};

/// Small architecture used by the finite-difference suite.
ArchConfig tiny_arch(LayerForm ae = LayerForm::kConv1d, LayerForm est = LayerForm::kLinear,
                     LayerForm cls = LayerForm::kLinear);

/// Compares reverse-mode gradients with central differences for every layer primitive and for the
/// total loss w.r.t. each parameter group under several layer forms.
std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed = 7);

}  // namespace semivl
