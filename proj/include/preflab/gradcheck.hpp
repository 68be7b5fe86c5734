// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "preflab/losses.hpp"
#include "preflab/policy.hpp"

namespace preflab {

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // flat index of the worst parameter
};

struct GradCheckReport {
  double h = 0.0;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool pass = false;
  std::vector<GradCheckBlock> blocks;
};

// Compares the objective's analytic gradient against central finite
// differences, parameter by parameter. The objective is re-evaluated with the
// model's parameters perturbed in place (restored afterwards). Relative error
// uses |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport check_gradients(ParamModel& model,
                                const std::function<LossEvaluation()>& objective, double h = 1e-5,
                                double tolerance = 1e-5);

}  // namespace preflab
