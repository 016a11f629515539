#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kd/nn/functional.hpp"

namespace kd::metrics {

struct PredictionRecord {
  std::string instance_id;
  std::vector<std::pair<int, double>> topk;  // (action id, prob), descending
  int target = -1;

  bool operator==(const PredictionRecord&) const = default;
};

// Keeps the k most probable classes of `dist`, ties to the lowest id.
PredictionRecord make_record(std::string instance_id, const nn::ProbDist& dist, int target, std::size_t k);

// Throws std::invalid_argument if probabilities increase or ids repeat.
void validate(const PredictionRecord& rec);

double acc_at_1(std::span<const PredictionRecord> records);
// Unweighted mean over classes present among the targets of per-class
// top-k recall.
double class_mean_recall(std::span<const PredictionRecord> records, int k);
// class_mean_recall restricted to targets in `many_shot`.
double many_shot_recall_at_k(std::span<const PredictionRecord> records, const std::set<int>& many_shot, int k = 5);

// {"id":"...","topk":[[action_id,prob],...],"target":action_id} per line.
void write_predictions(std::span<const PredictionRecord> records, std::ostream& os);
void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(std::istream& is);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  int k = 1;
  std::size_t n_records = 0;
  std::size_t n_classes = 0;
};

// Acc@1, Rec@1 and MS-Rec@5 over the records.
std::vector<MetricRow> evaluate(std::span<const PredictionRecord> records, const std::set<int>& many_shot);

// TSV with header "metric\tvalue\tk\tn_records\tn_classes".
void write_metric_report(std::span<const MetricRow> rows, std::ostream& os);

}  // namespace kd::metrics
