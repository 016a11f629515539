#include "kd/vocab/class_stats.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace kd::vocab {

std::vector<int> class_counts(const corpus::Dataset& train, const Vocabulary& vocab) {
  std::vector<int> counts(static_cast<std::size_t>(vocab.num_actions()), 0);
  for (const auto& inst : train.instances) {
    ++counts[static_cast<std::size_t>(vocab.action_id(inst.target))];
  }
  return counts;
}

std::vector<double> class_weights(std::span<const int> counts) {
  long total = 0;
  long seen = 0;
  for (int n : counts) {
    if (n < 0) throw std::invalid_argument(fmt::format("class_weights: negative count {}", n));
    total += n;
    if (n > 0) ++seen;
  }
  if (total == 0) {
    throw std::invalid_argument("class_weights: all counts are zero");
  }
  std::vector<double> w(counts.size(), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) {
      w[c] = static_cast<double>(total) / (static_cast<double>(seen) * static_cast<double>(counts[c]));
    }
  }
  return w;
}

std::set<int> many_shot_classes(std::span<const int> counts, int threshold,
                                const std::optional<std::vector<int>>& override_ids) {
  if (override_ids) {
    return {override_ids->begin(), override_ids->end()};
  }
  if (threshold < 1) {
    throw std::invalid_argument(fmt::format("many_shot_classes: threshold must be >= 1, got {}", threshold));
  }
  std::set<int> out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] >= threshold) out.insert(static_cast<int>(c));
  }
  return out;
}

ClassStats compute_class_stats(const corpus::Dataset& train, const Vocabulary& vocab, int many_shot_threshold,
                               const std::optional<std::vector<int>>& many_shot_override) {
  ClassStats stats;
  stats.counts = class_counts(train, vocab);
  stats.weights = class_weights(stats.counts);
  stats.many_shot = many_shot_classes(stats.counts, many_shot_threshold, many_shot_override);
  return stats;
}

}  // namespace kd::vocab
