#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Plain (non-differentiable) numeric kernels on probability vectors.
namespace kd::nn {

// A probability vector over some class space.
class ProbDist {
 public:
  ProbDist() = default;
  explicit ProbDist(std::vector<double> p) : p_(std::move(p)) {}

  [[nodiscard]] std::size_t size() const { return p_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return p_[i]; }
  [[nodiscard]] std::span<const double> values() const { return p_; }
  [[nodiscard]] double total() const;
  [[nodiscard]] std::size_t argmax() const;

 private:
  std::vector<double> p_;
};

// p_i = exp(l_i / gamma) / sum_j exp(l_j / gamma), max-subtracted.
// Throws std::invalid_argument for gamma <= 0.
ProbDist softmax_temp(std::span<const double> logits, double gamma);

// sum_i p_i ln(p_i / q_i) with 0 ln(0/q) = 0.
double kl_divergence(const ProbDist& p, const ProbDist& q);

// -w[target] * ln softmax(logits)[target]. A zero target weight yields 0
// and logs a warning.
double weighted_cross_entropy(std::span<const double> logits, int target, std::span<const double> weights);

// Indices of the k largest scores, descending; ties go to the lowest index.
std::vector<int> top_k_indices(std::span<const double> scores, std::size_t k);

}  // namespace kd::nn
