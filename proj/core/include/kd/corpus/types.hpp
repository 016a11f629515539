#pragma once

#include <compare>
#include <string>
#include <vector>

#include "kd/nn/tensor.hpp"

namespace kd::corpus {

// Object sentinel for intransitive clauses ("Stir.").
inline constexpr const char* kNoneObject = "NONE";

struct ActionStep {
  std::string verb;
  std::string object = kNoneObject;

  auto operator<=>(const ActionStep&) const = default;
};

// Ordered (verb, object) steps; the text-modality view of a video.
struct ActionSeq {
  std::vector<ActionStep> steps;

  bool operator==(const ActionSeq&) const = default;
};

// One anticipation example. `frames` is t x d (one row per frame);
// `segments` are the k observed action labels; `target` is the action that
// follows the observed window.
struct Instance {
  std::string id;
  nn::Matrix frames;
  ActionSeq segments;
  ActionStep target;

  bool operator==(const Instance& other) const;
};

struct Dataset {
  std::vector<Instance> instances;
  // Anticipation gap in seconds; carried as metadata only.
  double tau = 1.0;

  [[nodiscard]] Eigen::Index feature_dim() const {
    return instances.empty() ? 0 : instances.front().frames.cols();
  }
};

// Throws std::invalid_argument naming the first offending instance when a
// frame list or segment list is empty, feature dims differ, or a verb is empty.
void validate(const Dataset& ds);

// Label of the segment active at each frame, assuming segments cover the
// frames in equal consecutive runs (frame j -> segment floor(j * k / t)).
std::vector<ActionStep> frame_segment_labels(const Instance& inst);

// Label each frame should anticipate: the segment after the active one,
// and the instance target for frames of the final segment.
std::vector<ActionStep> frame_next_labels(const Instance& inst);

}  // namespace kd::corpus
