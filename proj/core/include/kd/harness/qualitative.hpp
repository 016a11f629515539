#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kd/corpus/types.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace kd::harness {

// Top-1 outcome of the text teacher and the distilled student.
enum class QualCategory {
  kTeacherCorrectDistilledCorrect,
  kTeacherCorrectDistilledWrong,
  kTeacherWrongDistilledCorrect,
  kTeacherWrongDistilledWrong,
};

std::string category_name(QualCategory c);

struct QualPrediction {
  std::vector<std::pair<int, double>> top5;
  int target_rank = -1;  // 0-based rank of the target inside top5, -1 if absent
};

struct QualEntry {
  std::string instance_id;
  std::vector<std::string> observed;  // segment labels, "verb_object"
  std::string target;
  QualPrediction baseline, teacher, distilled;
  QualCategory category = QualCategory::kTeacherWrongDistilledWrong;
};

struct QualitativeReport {
  std::vector<QualEntry> entries;
  bool clamped = false;  // n exceeded the dataset size
};

// Samples n instances (without replacement, fixed by seed, kept in dataset
// order) and records each model's top-5. The teacher reads the observed
// segments; both students read frames only.
QualitativeReport dump_qualitative(const student::StudentModel& baseline, const teacher::TeacherModel& teacher,
                                   const student::StudentModel& distilled, const corpus::Dataset& ds,
                                   const vocab::Vocabulary& vocab, int n, std::uint64_t seed);

// Markdown, grouped by category; the target is bold wherever it appears.
void write_qualitative_markdown(const QualitativeReport& report, const vocab::Vocabulary& vocab, std::ostream& os);

}  // namespace kd::harness
