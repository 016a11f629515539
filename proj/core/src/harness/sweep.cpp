#include "kd/harness/sweep.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <stdexcept>

namespace kd::harness {
namespace {

bool is_ensemble_param(const std::string& p) { return p == "ensemble_heads" || p == "strategy"; }

std::string value_label(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string target_row(const ExperimentConfig& cfg, const std::string& param) {
  if (is_ensemble_param(param)) return kRowEnsemble;
  for (const char* r : {kRowLm, kRowRcpLm, kRowEnsemble}) {
    if (cfg.has_row(r)) return r;
  }
  throw std::invalid_argument(fmt::format("sweep over '{}' needs a distilled row (lm, rcplm or ensemble)", param));
}

}  // namespace

ExperimentConfig with_param(const ExperimentConfig& cfg, const std::string& param, const nlohmann::json& value) {
  if (std::find(kSweepParams.begin(), kSweepParams.end(), param) == kSweepParams.end()) {
    throw std::invalid_argument(fmt::format("unknown sweep parameter '{}' (valid: {})", param, fmt::join(kSweepParams, ", ")));
  }
  const std::string key = param == "strategy" ? "ensemble_strategy" : param;
  auto out = apply_overrides(cfg, nlohmann::json{{key, value}});
  if (is_ensemble_param(param) && !out.has_row(kRowEnsemble)) out.rows.emplace_back(kRowEnsemble);
  return out;
}

SweepResult sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<nlohmann::json>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  SweepResult result;
  result.param = param;
  for (const auto& v : values) {
    auto point = with_param(cfg, param, v);
    point.output_dir = (std::filesystem::path(cfg.output_dir) / fmt::format("{}={}", param, value_label(v))).string();
    const auto row = target_row(point, param);
    auto report = run_experiment(point);
    if (!report.ok()) throw std::runtime_error(fmt::format("sweep {}={}: {}", param, value_label(v), *report.failed_stage));
    result.rows.push_back({v, row, report.mean(row, "acc@1"), report.mean(row, "rec@1"), report.mean(row, "ms-rec@5")});
    result.reports.push_back(std::move(report));
  }
  return result;
}

void write_sweep_tsv(const SweepResult& result, std::ostream& os) {
  os << "param\tvalue\trow\tacc@1\trec@1\tms-rec@5\n";
  for (const auto& r : result.rows) {
    os << fmt::format("{}\t{}\t{}\t{:.6f}\t{:.6f}\t{:.6f}\n", result.param, value_label(r.value), r.row, r.acc1, r.rec1,
                      r.ms_rec5);
  }
}

}  // namespace kd::harness
