#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/harness/config.hpp"
#include "kd/harness/pipeline.hpp"

namespace kd::harness {

inline const std::vector<std::string> kSweepParams = {"lambda_s", "gamma", "top_k", "ensemble_heads", "strategy"};

struct SweepRow {
  nlohmann::json value;
  std::string row;  // the student row the parameter acts on
  double acc1 = 0.0;
  double rec1 = 0.0;
  double ms_rec5 = 0.0;
};

struct SweepResult {
  std::string param;
  std::vector<SweepRow> rows;
  std::vector<RunReport> reports;
};

// Config with `param` set to `value`. Throws listing the valid names when
// `param` is unknown.
ExperimentConfig with_param(const ExperimentConfig& cfg, const std::string& param, const nlohmann::json& value);

// One run_experiment per value under <output_dir>/<param>=<value>/.
// Distillation parameters are read off the first distilled row of the
// config; ensemble_heads and strategy off the ensemble row, which is added
// when missing. Seed means are reported.
SweepResult sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<nlohmann::json>& values);

// TSV: param, value, row, acc@1, rec@1, ms-rec@5.
void write_sweep_tsv(const SweepResult& result, std::ostream& os);

}  // namespace kd::harness
