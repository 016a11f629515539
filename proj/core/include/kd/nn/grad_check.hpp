#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kd/nn/param_store.hpp"

namespace kd::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t elements_checked = 0;
};

// Compares the reverse-mode gradient of `loss_fn` against central
// differences (f(x + eps) - f(x - eps)) / (2 eps), element by element, for
// every entry of every listed parameter. Relative error is
// |a - n| / max(1e-8, |a| + |n|). The function is re-evaluated from the
// current parameter values on every call. Throws on a non-finite loss.
GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::vector<Param>& params, double eps = 1e-4);

}  // namespace kd::nn
