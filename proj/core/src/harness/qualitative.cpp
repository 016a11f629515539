#include "kd/harness/qualitative.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "kd/metrics/metrics.hpp"

namespace kd::harness {
namespace {

QualPrediction make_prediction(const nn::ProbDist& dist, int target) {
  QualPrediction p;
  p.top5 = metrics::make_record("", dist, target, 5).topk;
  for (std::size_t r = 0; r < p.top5.size(); ++r) {
    if (p.top5[r].first == target) p.target_rank = static_cast<int>(r);
  }
  return p;
}

constexpr QualCategory kCategories[] = {
    QualCategory::kTeacherCorrectDistilledCorrect,
    QualCategory::kTeacherCorrectDistilledWrong,
    QualCategory::kTeacherWrongDistilledCorrect,
    QualCategory::kTeacherWrongDistilledWrong,
};

}  // namespace

std::string category_name(QualCategory c) {
  switch (c) {
    case QualCategory::kTeacherCorrectDistilledCorrect:
      return "teacher-correct, distilled-correct";
    case QualCategory::kTeacherCorrectDistilledWrong:
      return "teacher-correct, distilled-wrong";
    case QualCategory::kTeacherWrongDistilledCorrect:
      return "teacher-wrong, distilled-correct";
    case QualCategory::kTeacherWrongDistilledWrong:
      return "teacher-wrong, distilled-wrong";
  }
  return "?";
}

QualitativeReport dump_qualitative(const student::StudentModel& baseline, const teacher::TeacherModel& teacher,
                                   const student::StudentModel& distilled, const corpus::Dataset& ds,
                                   const vocab::Vocabulary& vocab, int n, std::uint64_t seed) {
  const int c = vocab.num_actions();
  if (baseline.dims().actions != c || distilled.dims().actions != c || teacher.dims().actions != c) {
    throw std::invalid_argument(fmt::format("qualitative: class spaces differ (baseline {}, teacher {}, distilled {}, vocab {})",
                                            baseline.dims().actions, teacher.dims().actions,
                                            distilled.dims().actions, c));
  }
  if (n < 0) throw std::invalid_argument("qualitative: n must be >= 0");
  QualitativeReport report;
  auto count = static_cast<std::size_t>(n);
  if (count > ds.instances.size()) {
    spdlog::warn("qualitative: n={} exceeds the {} instances; clamping", n, ds.instances.size());
    count = ds.instances.size();
    report.clamped = true;
  }

  std::vector<std::size_t> order(ds.instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());

  for (auto idx : order) {
    const auto& inst = ds.instances[idx];
    const int target = vocab.action_id(inst.target);
    QualEntry e;
    e.instance_id = inst.id;
    for (const auto& s : inst.segments.steps) e.observed.push_back(vocab::format_action_name(s));
    e.target = vocab::format_action_name(inst.target);
    e.baseline = make_prediction(baseline.predict(inst.frames).y_final, target);
    const auto tokens = vocab.encode_sequence(inst.segments, teacher.config().context_len);
    e.teacher = make_prediction(teacher.forward(tokens).y_action, target);
    e.distilled = make_prediction(distilled.predict(inst.frames).y_final, target);
    const bool t_ok = e.teacher.target_rank == 0;
    const bool d_ok = e.distilled.target_rank == 0;
    e.category = t_ok ? (d_ok ? QualCategory::kTeacherCorrectDistilledCorrect : QualCategory::kTeacherCorrectDistilledWrong)
                      : (d_ok ? QualCategory::kTeacherWrongDistilledCorrect : QualCategory::kTeacherWrongDistilledWrong);
    report.entries.push_back(std::move(e));
  }
  return report;
}

void write_qualitative_markdown(const QualitativeReport& report, const vocab::Vocabulary& vocab, std::ostream& os) {
  auto list = [&](const QualPrediction& p) {
    std::string s;
    for (std::size_t r = 0; r < p.top5.size(); ++r) {
      if (r > 0) s += ", ";
      const auto name = fmt::format("{} ({:.3f})", vocab.action_name(p.top5[r].first), p.top5[r].second);
      s += static_cast<int>(r) == p.target_rank ? "**" + name + "**" : name;
    }
    return s;
  };

  os << "# Qualitative comparison\n\n";
  if (report.clamped) os << "Requested sample exceeded the dataset; every instance is shown.\n\n";
  for (auto cat : kCategories) {
    std::size_t total = 0;
    for (const auto& e : report.entries) total += e.category == cat ? 1 : 0;
    os << "## " << category_name(cat) << " (" << total << ")\n\n";
    for (const auto& e : report.entries) {
      if (e.category != cat) continue;
      std::string observed;
      for (const auto& s : e.observed) observed += (observed.empty() ? "" : " → ") + s;
      os << "### " << e.instance_id << "\n\n";
      os << "- observed: " << observed << "\n";
      os << "- target: " << e.target << "\n";
      os << "- video-only: " << list(e.baseline) << "\n";
      os << "- text teacher: " << list(e.teacher) << "\n";
      os << "- distilled: " << list(e.distilled) << "\n\n";
    }
  }
}

}  // namespace kd::harness
