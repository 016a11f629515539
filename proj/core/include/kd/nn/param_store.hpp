#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kd/nn/tensor.hpp"

namespace kd::nn {

struct Param {
  std::string name;
  Var var;
};

// Ordered, name-unique collection of trainable leaves. Insertion order is
// the iteration order, which keeps optimizer updates deterministic.
class ParamStore {
 public:
  Var add(const std::string& name, Matrix init);
  [[nodiscard]] const Var& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const;

  [[nodiscard]] std::vector<Param>& entries() { return params_; }
  [[nodiscard]] const std::vector<Param>& entries() const { return params_; }
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t element_count() const;

  void zero_grad();

 private:
  std::vector<Param> params_;
};

using Rng = std::mt19937_64;

// N(0, std^2) entries.
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
// Weight for an affine map in -> out, scaled by 1/sqrt(in).
Matrix init_weight(Eigen::Index in, Eigen::Index out, Rng& rng);

}  // namespace kd::nn
