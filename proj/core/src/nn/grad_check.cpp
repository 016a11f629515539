#include "kd/nn/grad_check.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kd::nn {
namespace {

double evaluate(const std::function<Var()>& loss_fn) {
  const double v = loss_fn().item();
  if (!std::isfinite(v)) {
    throw std::runtime_error(fmt::format("grad_check: non-finite loss {}", v));
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::vector<Param>& params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument(fmt::format("grad_check: eps must lie in (0, 1e-2], got {}", eps));
  }
  for (auto& p : params) {
    p.var.zero_grad();
  }
  Var loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw std::runtime_error(fmt::format("grad_check: non-finite loss {}", loss.item()));
  }
  backward(loss);

  GradCheckResult result;
  for (auto& p : params) {
    const Matrix analytic = p.var.has_grad() ? p.var.grad() : Matrix::Zero(p.var.rows(), p.var.cols());
    Matrix& values = p.var.mutable_value();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const double saved = values.data()[i];
      values.data()[i] = saved + eps;
      const double f_plus = evaluate(loss_fn);
      values.data()[i] = saved - eps;
      const double f_minus = evaluate(loss_fn);
      values.data()[i] = saved;

      const double a = analytic.data()[i];
      const double n = (f_plus - f_minus) / (2.0 * eps);
      const double rel = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
      ++result.elements_checked;
      if (result.worst_index < 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = n;
      }
    }
    p.var.zero_grad();
  }
  return result;
}

}  // namespace kd::nn
