#pragma once

#include <optional>
#include <set>
#include <span>
#include <vector>

#include "kd/corpus/types.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace kd::vocab {

// Target-class histogram over a training split.
std::vector<int> class_counts(const corpus::Dataset& train, const Vocabulary& vocab);

// w_c = N / (C_seen * n_c) for seen classes, 0 for unseen ones, where N is
// the total count and C_seen the number of classes with n_c > 0.
// Throws std::invalid_argument when every count is zero.
std::vector<double> class_weights(std::span<const int> counts);

// {c : n_c >= threshold}, or `override_ids` verbatim when provided.
std::set<int> many_shot_classes(std::span<const int> counts, int threshold,
                                const std::optional<std::vector<int>>& override_ids = std::nullopt);

struct ClassStats {
  std::vector<int> counts;
  std::vector<double> weights;
  std::set<int> many_shot;
};

ClassStats compute_class_stats(const corpus::Dataset& train, const Vocabulary& vocab, int many_shot_threshold,
                               const std::optional<std::vector<int>>& many_shot_override = std::nullopt);

}  // namespace kd::vocab
