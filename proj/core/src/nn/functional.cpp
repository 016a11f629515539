#include "kd/nn/functional.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kd::nn {

double ProbDist::total() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

std::size_t ProbDist::argmax() const {
  if (p_.empty()) {
    throw std::logic_error("argmax of an empty distribution");
  }
  return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

ProbDist softmax_temp(std::span<const double> logits, double gamma) {
  if (!(gamma > 0.0)) {
    throw std::invalid_argument(fmt::format("softmax_temp: temperature must be > 0, got {}", gamma));
  }
  if (logits.empty()) {
    throw std::invalid_argument("softmax_temp: empty logits");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / gamma);
    z += p[i];
  }
  for (double& v : p) {
    v /= z;
  }
  return ProbDist(std::move(p));
}

double kl_divergence(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument(fmt::format("kl_divergence: length mismatch {} vs {}", p.size(), q.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      total += p[i] * std::log(p[i] / q[i]);
    }
  }
  return total;
}

double weighted_cross_entropy(std::span<const double> logits, int target, std::span<const double> weights) {
  if (weights.size() != logits.size()) {
    throw std::invalid_argument("weighted_cross_entropy: weights length != class count");
  }
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw std::out_of_range(fmt::format("weighted_cross_entropy: target {} outside {} classes", target,
                                        logits.size()));
  }
  const double w = weights[static_cast<std::size_t>(target)];
  if (w == 0.0) {
    spdlog::warn("weighted_cross_entropy: target class {} has weight 0 (unseen in training counts)", target);
    return 0.0;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) {
    z += std::exp(l - m);
  }
  return -w * (logits[static_cast<std::size_t>(target)] - m - std::log(z));
}

std::vector<int> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    throw std::invalid_argument(fmt::format("top_k: k = {} exceeds {} classes", k, scores.size()));
  }
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  });
  idx.resize(k);
  return idx;
}

}  // namespace kd::nn
