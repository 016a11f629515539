#include "kd/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kd::nn {

void AdamW::step(std::vector<Param>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
      v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    }
  }
  if (m_.size() != params.size()) {
    throw std::logic_error("AdamW: parameter list changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& var = params[i].var;
    Matrix& theta = var.mutable_value();
    theta *= decay;
    if (!var.has_grad()) {
      m_[i] *= cfg_.beta1;
      v_[i] *= cfg_.beta2;
      continue;
    }
    const Matrix& g = var.grad();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    theta.array() -= cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace kd::nn
