#include "kd/metrics/metrics.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "kd/nn/checkpoint.hpp"

namespace kd::metrics {

PredictionRecord make_record(std::string instance_id, const nn::ProbDist& dist, int target, std::size_t k) {
  PredictionRecord rec;
  rec.instance_id = std::move(instance_id);
  rec.target = target;
  for (int id : nn::top_k_indices(dist.values(), std::min(k, dist.size()))) {
    rec.topk.emplace_back(id, dist[static_cast<std::size_t>(id)]);
  }
  return rec;
}

void validate(const PredictionRecord& rec) {
  std::unordered_set<int> seen;
  for (std::size_t i = 0; i < rec.topk.size(); ++i) {
    if (!seen.insert(rec.topk[i].first).second) {
      throw std::invalid_argument(fmt::format("record '{}': class {} repeated in topk", rec.instance_id, rec.topk[i].first));
    }
    if (i > 0 && rec.topk[i].second > rec.topk[i - 1].second) {
      throw std::invalid_argument(fmt::format("record '{}': topk probabilities increase at rank {}", rec.instance_id, i));
    }
  }
}

namespace {

void require_records(std::span<const PredictionRecord> records, const char* what) {
  if (records.empty()) throw std::invalid_argument(fmt::format("{}: no records", what));
}

bool hit_at(const PredictionRecord& rec, int k) {
  const auto n = std::min(rec.topk.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (rec.topk[i].first == rec.target) return true;
  }
  return false;
}

// Mean per-class recall over targets accepted by `keep`.
template <typename Keep>
double mean_recall(std::span<const PredictionRecord> records, int k, Keep keep, std::size_t* n_classes) {
  std::map<int, std::pair<long, long>> per_class;  // target -> (hits, total)
  for (const auto& rec : records) {
    if (!keep(rec.target)) continue;
    auto& [hits, total] = per_class[rec.target];
    ++total;
    if (hit_at(rec, k)) ++hits;
  }
  if (n_classes) *n_classes = per_class.size();
  if (per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [c, ht] : per_class) sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return sum / static_cast<double>(per_class.size());
}

}  // namespace

double acc_at_1(std::span<const PredictionRecord> records) {
  require_records(records, "acc_at_1");
  long correct = 0;
  for (const auto& rec : records) {
    if (!rec.topk.empty() && rec.topk.front().first == rec.target) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double class_mean_recall(std::span<const PredictionRecord> records, int k) {
  require_records(records, "class_mean_recall");
  if (k < 1) throw std::invalid_argument(fmt::format("class_mean_recall: k must be >= 1, got {}", k));
  return mean_recall(records, k, [](int) { return true; }, nullptr);
}

double many_shot_recall_at_k(std::span<const PredictionRecord> records, const std::set<int>& many_shot, int k) {
  require_records(records, "many_shot_recall_at_k");
  if (k < 1) throw std::invalid_argument(fmt::format("many_shot_recall_at_k: k must be >= 1, got {}", k));
  std::size_t n_classes = 0;
  const double r = mean_recall(records, k, [&](int c) { return many_shot.contains(c); }, &n_classes);
  if (n_classes == 0) throw std::invalid_argument("no many-shot targets in split");
  return r;
}

void write_predictions(std::span<const PredictionRecord> records, std::ostream& os) {
  for (const auto& rec : records) {
    os << "{\"id\":" << nlohmann::json(rec.instance_id).dump() << ",\"topk\":[";
    for (std::size_t i = 0; i < rec.topk.size(); ++i) {
      if (i) os << ',';
      os << '[' << rec.topk[i].first << ',' << nn::format_double17(rec.topk[i].second) << ']';
    }
    os << "],\"target\":" << rec.target << "}\n";
  }
}

void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  write_predictions(records, os);
}

std::vector<PredictionRecord> read_predictions(std::istream& is) {
  std::vector<PredictionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord rec;
      rec.instance_id = j.at("id").get<std::string>();
      rec.target = j.at("target").get<int>();
      for (const auto& e : j.at("topk")) rec.topk.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
      validate(rec);
      out.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::invalid_argument(fmt::format("predictions line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  return read_predictions(is);
}

std::vector<MetricRow> evaluate(std::span<const PredictionRecord> records, const std::set<int>& many_shot) {
  require_records(records, "evaluate");
  std::size_t all_classes = 0;
  mean_recall(records, 1, [](int) { return true; }, &all_classes);
  std::size_t ms_classes = 0;
  mean_recall(records, 5, [&](int c) { return many_shot.contains(c); }, &ms_classes);
  return {
      {"acc@1", acc_at_1(records), 1, records.size(), all_classes},
      {"rec@1", class_mean_recall(records, 1), 1, records.size(), all_classes},
      {"ms-rec@5", many_shot_recall_at_k(records, many_shot, 5), 5, records.size(), ms_classes},
  };
}

void write_metric_report(std::span<const MetricRow> rows, std::ostream& os) {
  os << "metric\tvalue\tk\tn_records\tn_classes\n";
  for (const auto& r : rows) {
    os << r.metric << '\t' << fmt::format("{:.6f}", r.value) << '\t' << r.k << '\t' << r.n_records << '\t'
       << r.n_classes << '\n';
  }
}

}  // namespace kd::metrics
