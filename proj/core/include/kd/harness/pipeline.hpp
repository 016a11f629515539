#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kd/corpus/types.hpp"
#include "kd/harness/config.hpp"
#include "kd/metrics/metrics.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace kd::harness {

// Metric names in report column order.
inline const std::vector<std::string> kMetricNames = {"acc@1", "rec@1", "ms-rec@5"};

struct SeedResult {
  std::uint64_t seed = 0;
  // row -> metric -> value; rows include the standalone teachers
  // ("teacher-lm", "teacher-rcplm").
  std::map<std::string, std::map<std::string, double>> metrics;
  std::map<std::string, double> seconds;  // stage -> wall clock
};

struct RunReport {
  ExperimentConfig config;
  std::vector<std::string> rows;  // report order
  std::vector<SeedResult> seeds;
  std::optional<std::string> failed_stage;

  [[nodiscard]] bool ok() const { return !failed_stage.has_value(); }
  // Values of one cell across the seeds that produced it.
  [[nodiscard]] std::vector<double> values(const std::string& row, const std::string& metric) const;
  [[nodiscard]] double mean(const std::string& row, const std::string& metric) const;
  // Sample standard deviation (n - 1); 0 for a single seed.
  [[nodiscard]] double sd(const std::string& row, const std::string& metric) const;
};

// Report rows for a config: student rows with their teachers' standalone
// rows placed just before them.
std::vector<std::string> report_rows(const ExperimentConfig& cfg);

// Runs every seed in order and writes, under cfg.output_dir:
//   config.json, report.tsv, report.md, timing.tsv
//   seed-<s>/vocab.json, many_shot.json, ckpt/*.json, preds/<row>.jsonl
// Report files depend only on (config, seeds, inputs); wall clock goes to
// timing.tsv. A failing stage stops the run and the report lists the
// completed rows plus the failed stage.
RunReport run_experiment(const ExperimentConfig& cfg);

void write_report_tsv(const RunReport& report, std::ostream& os);
void write_report_markdown(const RunReport& report, std::ostream& os);

// Data for one seed: generated when the config is synthetic, else loaded.
struct SeedData {
  corpus::Dataset train;
  corpus::Dataset test;
  vocab::Vocabulary vocab;
};
SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

// Pretraining sequences: parsed from cfg.pretrain_corpus, or sampled from
// the synthetic chain and rendered to instruction text and parsed back.
std::vector<corpus::ActionSeq> pretraining_sequences(const ExperimentConfig& cfg, std::uint64_t seed);

// Prediction records from frames only.
std::vector<metrics::PredictionRecord> predict_student(const student::StudentModel& model,
                                                       const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                                       std::size_t k = 5);
std::vector<metrics::PredictionRecord> predict_teacher(const teacher::TeacherModel& model,
                                                       const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                                       std::size_t k = 5);

}  // namespace kd::harness
