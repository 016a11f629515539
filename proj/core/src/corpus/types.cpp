#include "kd/corpus/types.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace kd::corpus {

bool Instance::operator==(const Instance& other) const {
  return id == other.id && segments == other.segments && target == other.target &&
         frames.rows() == other.frames.rows() && frames.cols() == other.frames.cols() && frames == other.frames;
}

void validate(const Dataset& ds) {
  if (ds.instances.empty()) {
    throw std::invalid_argument("dataset has no instances");
  }
  const Eigen::Index d = ds.instances.front().frames.cols();
  for (const auto& inst : ds.instances) {
    if (inst.frames.rows() < 1) {
      throw std::invalid_argument(fmt::format("instance '{}': no frames", inst.id));
    }
    if (inst.frames.cols() != d || d < 1) {
      throw std::invalid_argument(
          fmt::format("instance '{}': feature dim {} differs from dataset dim {}", inst.id, inst.frames.cols(), d));
    }
    if (inst.segments.steps.empty()) {
      throw std::invalid_argument(fmt::format("instance '{}': empty segment sequence", inst.id));
    }
    for (const auto& s : inst.segments.steps) {
      if (s.verb.empty() || s.object.empty()) {
        throw std::invalid_argument(fmt::format("instance '{}': segment with empty verb or object", inst.id));
      }
    }
    if (inst.target.verb.empty() || inst.target.object.empty()) {
      throw std::invalid_argument(fmt::format("instance '{}': target with empty verb or object", inst.id));
    }
  }
}

std::vector<ActionStep> frame_segment_labels(const Instance& inst) {
  const auto t = static_cast<std::size_t>(inst.frames.rows());
  const auto k = inst.segments.steps.size();
  std::vector<ActionStep> out;
  out.reserve(t);
  for (std::size_t j = 0; j < t; ++j) {
    out.push_back(inst.segments.steps[j * k / t]);
  }
  return out;
}

std::vector<ActionStep> frame_next_labels(const Instance& inst) {
  const auto t = static_cast<std::size_t>(inst.frames.rows());
  const auto k = inst.segments.steps.size();
  std::vector<ActionStep> out;
  out.reserve(t);
  for (std::size_t j = 0; j < t; ++j) {
    const std::size_t seg = j * k / t;
    out.push_back(seg + 1 < k ? inst.segments.steps[seg + 1] : inst.target);
  }
  return out;
}

}  // namespace kd::corpus
