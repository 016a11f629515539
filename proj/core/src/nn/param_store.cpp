#include "kd/nn/param_store.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace kd::nn {

Var ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) {
    throw std::invalid_argument(fmt::format("duplicate parameter name '{}'", name));
  }
  params_.push_back(Param{name, Var::leaf(std::move(init))});
  return params_.back().var;
}

const Var& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) {
      return p.var;
    }
  }
  throw std::out_of_range(fmt::format("no parameter named '{}'", name));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) {
      return true;
    }
  }
  return false;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += static_cast<std::size_t>(p.var.value().size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    p.var.zero_grad();
  }
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

Matrix init_weight(Eigen::Index in, Eigen::Index out, Rng& rng) {
  return random_normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

}  // namespace kd::nn
