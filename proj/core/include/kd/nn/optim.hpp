#pragma once

#include <cstdint>
#include <vector>

#include "kd/nn/param_store.hpp"

namespace kd::nn {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay: theta <- theta * (1 - lr * wd) is
// applied before, and separately from, the bias-corrected moment update.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Parameters without a populated grad are treated as having zero grad.
  void step(std::vector<Param>& params);
  void step(ParamStore& store) { step(store.entries()); }

  [[nodiscard]] std::int64_t steps_taken() const { return t_; }
  [[nodiscard]] const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace kd::nn
