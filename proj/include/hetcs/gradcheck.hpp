#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hetcs/autodiff.hpp"

namespace hetcs::ad {

/// Builds a scalar loss on `tape` from tracked handles of the parameters.
using LossBuilder = std::function<Var(Tape& tape, const std::vector<Var>& params)>;

struct GradCheckReport {
  /// Per-parameter ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂); 0 when both vanish.
  std::vector<double> relative_errors;
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
};

/// Compares backward() against central differences coordinate by coordinate.
/// Parameters are perturbed in place and restored.
GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<Matrix*>& params,
                                  double step = 1e-5);

}  // namespace hetcs::ad
