// SPDX-License-Identifier: Apache-2.0
#include "preflab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "preflab/errors.hpp"

namespace preflab {

GradCheckReport check_gradients(ParamModel& model,
                                const std::function<LossEvaluation()>& objective, double h,
                                double tolerance) {
  if (!(h > 1e-8 && h < 1e-3)) {
    throw InvalidArgument("check_gradients: step size must lie in (1e-8, 1e-3)");
  }
  if (!(tolerance > 0.0)) throw InvalidArgument("check_gradients: tolerance must be positive");

  LossEvaluation base = objective();
  std::span<double> params = model.params();
  if (base.gradient.size() != params.size()) {
    throw InvalidArgument("check_gradients: gradient length does not match parameter count");
  }

  GradCheckReport report;
  report.h = h;
  report.tolerance = tolerance;
  for (const ParamBlock& block : model.param_blocks()) {
    GradCheckBlock out{block.name, 0.0, block.offset};
    for (std::size_t k = block.offset; k < block.offset + block.size; ++k) {
      double saved = params[k];
      params[k] = saved + h;
      double up = objective().value;
      params[k] = saved - h;
      double down = objective().value;
      params[k] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = base.gradient[k];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      double rel = std::abs(analytic - numeric) / denom;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_param = k;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, out.max_rel_error);
    report.blocks.push_back(std::move(out));
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace preflab
