#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/corpus/synthetic.hpp"
#include "kd/ensemble/ensemble.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"

namespace kd::harness {

// Rows of the experiment table, in report order.
inline constexpr const char* kRowBaseline = "baseline";
inline constexpr const char* kRowLm = "lm";
inline constexpr const char* kRowRcpLm = "rcplm";
inline constexpr const char* kRowEnsemble = "ensemble";

struct ExperimentConfig {
  std::string profile = "synth";

  // Dataset files; when both are empty the synthetic generator runs once
  // per seed.
  std::string train_path;
  std::string test_path;
  corpus::SynthConfig synth;

  // Instruction text for MLM pretraining; empty means sequences sampled
  // from the synthetic chain and rendered to text.
  std::string pretrain_corpus;
  int pretrain_sequences = 400;
  int pretrain_sequence_len = 12;

  teacher::TeacherConfig teacher;
  student::StudentConfig student;
  student::DistillConfig distill;
  ensemble::EnsembleConfig ensemble;

  std::vector<std::string> rows = {kRowBaseline, kRowLm, kRowRcpLm};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int many_shot_threshold = 10;
  std::optional<std::vector<int>> many_shot_override;
  std::string output_dir = "runs/default";

  [[nodiscard]] bool has_row(const std::string& row) const;
  [[nodiscard]] bool uses_synthetic() const { return train_path.empty() && test_path.empty(); }

  // Throws std::invalid_argument on the first violated invariant: distinct
  // seeds, known rows, both or neither dataset path, existing input files.
  void validate() const;
};

// Defaults for "synth", "epic" and "egtea".
ExperimentConfig profile_defaults(const std::string& profile);

// Flat key/value view: top-level keys plus "teacher_*", "student_*" and
// "synth_*" for the nested configs.
nlohmann::json to_flat_json(const ExperimentConfig& cfg);

// Starts from the profile named by "profile" (default synth) and applies
// every other key. Unknown keys are an error naming the key.
ExperimentConfig from_flat_json(const nlohmann::json& flat);

// Applies `overrides` key by key on top of `cfg`.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const nlohmann::json& overrides);

ExperimentConfig load_config(const std::filesystem::path& path);

// Parses a command-line value: JSON when it parses, else a bare string.
nlohmann::json parse_value(const std::string& text);

}  // namespace kd::harness
