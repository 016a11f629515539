#include "kd/harness/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kd/corpus/dataset_io.hpp"
#include "kd/corpus/instructions.hpp"
#include "kd/corpus/synthetic.hpp"
#include "kd/ensemble/ensemble.hpp"
#include "kd/nn/checkpoint.hpp"
#include "kd/vocab/class_stats.hpp"

namespace kd::harness {
namespace fs = std::filesystem;

namespace {

constexpr const char* kTeacherLm = "teacher-lm";
constexpr const char* kTeacherRcpLm = "teacher-rcplm";

struct StageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string display_name(const std::string& row) {
  if (row == kRowBaseline) return "Student (frames only)";
  if (row == kTeacherLm) return "LM teacher (text only)";
  if (row == kRowLm) return "Student + LM distillation";
  if (row == kTeacherRcpLm) return "RcpLM teacher (text only)";
  if (row == kRowRcpLm) return "Student + RcpLM distillation";
  if (row == kRowEnsemble) return "Student + ensemble distillation";
  return row;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

class SeedRunner {
 public:
  SeedRunner(const ExperimentConfig& cfg, std::uint64_t seed, SeedResult& result)
      : cfg_(cfg), seed_(seed), result_(result), dir_(fs::path(cfg.output_dir) / fmt::format("seed-{}", seed)) {}

  void run() {
    fs::create_directories(dir_ / "ckpt");
    fs::create_directories(dir_ / "preds");

    stage("data", [&] {
      data_ = prepare_data(cfg_, seed_);
      stats_ = vocab::compute_class_stats(data_.train, data_.vocab, cfg_.many_shot_threshold,
                                          cfg_.many_shot_override);
      write_text(dir_ / "vocab.json", data_.vocab.to_json().dump(2) + "\n");
      nlohmann::json ms = {{"threshold", cfg_.many_shot_threshold},
                           {"override", cfg_.many_shot_override ? nlohmann::json(*cfg_.many_shot_override)
                                                                : nlohmann::json(nullptr)},
                           {"classes", stats_.many_shot}};
      write_text(dir_ / "many_shot.json", ms.dump(2) + "\n");
    });

    const bool need_lm = cfg_.has_row(kRowLm) || cfg_.has_row(kRowEnsemble);
    const bool need_rcp = cfg_.has_row(kRowRcpLm) || cfg_.has_row(kRowEnsemble);

    if (cfg_.has_row(kRowBaseline)) {
      stage("train-student[baseline]", [&] {
        auto model = student::train_student(data_.train, data_.vocab, student_cfg(), cfg_.distill, nullptr);
        finish_student(kRowBaseline, model);
      });
    }
    if (need_lm) {
      stage("train-teacher[lm]", [&] {
        lm_ = teacher::finetune_teacher(data_.train, data_.vocab, teacher_cfg());
        finish_teacher(kTeacherLm, *lm_);
      });
    }
    if (cfg_.has_row(kRowLm)) {
      stage("train-student[lm]", [&] {
        student::TeacherSource source(*lm_);
        auto model = student::train_student(data_.train, data_.vocab, student_cfg(), cfg_.distill, &source);
        finish_student(kRowLm, model);
      });
    }
    if (need_rcp) {
      nn::Checkpoint encoder;
      stage("pretrain-teacher", [&] {
        const auto seqs = pretraining_sequences(cfg_, seed_);
        encoder = teacher::pretrain_mlm(seqs, data_.vocab, teacher_cfg()).checkpoint;
        nn::save_checkpoint(encoder, dir_ / "ckpt" / "pretrain.json");
      });
      stage("train-teacher[rcplm]", [&] {
        rcp_ = teacher::finetune_teacher(data_.train, data_.vocab, teacher_cfg(), &encoder);
        finish_teacher(kTeacherRcpLm, *rcp_);
      });
    }
    if (cfg_.has_row(kRowRcpLm)) {
      stage("train-student[rcplm]", [&] {
        student::TeacherSource source(*rcp_);
        auto model = student::train_student(data_.train, data_.vocab, student_cfg(), cfg_.distill, &source);
        finish_student(kRowRcpLm, model);
      });
    }
    if (cfg_.has_row(kRowEnsemble)) {
      stage("train-student[ensemble]", [&] {
        auto ecfg = cfg_.ensemble;
        ecfg.seed = seed_;
        auto res = ensemble::train_ensemble_student(data_.train, data_.vocab, student_cfg(), cfg_.distill, ecfg,
                                                    {&*lm_, &*rcp_});
        nn::save_checkpoint(res.ensemble, dir_ / "ckpt" / "ensemble.json");
        finish_student(kRowEnsemble, res.student);
      });
    }
  }

 private:
  template <typename F>
  void stage(const std::string& name, F&& body) {
    spdlog::info("seed {}: {}", seed_, name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      throw StageFailure(fmt::format("seed {}: {}: {}", seed_, name, e.what()));
    }
    result_.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  teacher::TeacherConfig teacher_cfg() const {
    auto c = cfg_.teacher;
    c.seed = seed_;
    return c;
  }

  student::StudentConfig student_cfg() const {
    auto c = cfg_.student;
    c.seed = seed_;
    return c;
  }

  void record(const std::string& row, const std::vector<metrics::PredictionRecord>& preds) {
    metrics::write_predictions(preds, dir_ / "preds" / (row + ".jsonl"));
    for (const auto& m : metrics::evaluate(preds, stats_.many_shot)) result_.metrics[row][m.metric] = m.value;
  }

  void finish_student(const std::string& row, const student::StudentModel& model) {
    nn::save_checkpoint(model.to_checkpoint(), dir_ / "ckpt" / fmt::format("student-{}.json", row));
    record(row, predict_student(model, data_.test, data_.vocab));
  }

  void finish_teacher(const std::string& row, const teacher::TeacherModel& model) {
    nn::save_checkpoint(model.to_checkpoint(), dir_ / "ckpt" / (row + ".json"));
    record(row, predict_teacher(model, data_.test, data_.vocab));
  }

  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  SeedResult& result_;
  fs::path dir_;
  SeedData data_;
  vocab::ClassStats stats_;
  std::optional<teacher::TeacherModel> lm_;
  std::optional<teacher::TeacherModel> rcp_;
};

std::string fmt_value(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

std::vector<double> RunReport::values(const std::string& row, const std::string& metric) const {
  std::vector<double> out;
  for (const auto& s : seeds) {
    const auto r = s.metrics.find(row);
    if (r == s.metrics.end()) continue;
    const auto m = r->second.find(metric);
    if (m != r->second.end()) out.push_back(m->second);
  }
  return out;
}

double RunReport::mean(const std::string& row, const std::string& metric) const {
  const auto v = values(row, metric);
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double RunReport::sd(const std::string& row, const std::string& metric) const {
  const auto v = values(row, metric);
  if (v.size() < 2) return v.empty() ? std::nan("") : 0.0;
  const double m = mean(row, metric);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<std::string> report_rows(const ExperimentConfig& cfg) {
  std::vector<std::string> rows;
  const bool lm = cfg.has_row(kRowLm) || cfg.has_row(kRowEnsemble);
  const bool rcp = cfg.has_row(kRowRcpLm) || cfg.has_row(kRowEnsemble);
  if (cfg.has_row(kRowBaseline)) rows.emplace_back(kRowBaseline);
  if (lm) rows.emplace_back(kTeacherLm);
  if (cfg.has_row(kRowLm)) rows.emplace_back(kRowLm);
  if (rcp) rows.emplace_back(kTeacherRcpLm);
  if (cfg.has_row(kRowRcpLm)) rows.emplace_back(kRowRcpLm);
  if (cfg.has_row(kRowEnsemble)) rows.emplace_back(kRowEnsemble);
  return rows;
}

SeedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData d;
  if (cfg.uses_synthetic()) {
    auto split = corpus::gen_synthetic(cfg.synth, seed);
    d.train = std::move(split.train);
    d.test = std::move(split.test);
  } else {
    d.train = corpus::load_dataset(cfg.train_path);
    d.test = corpus::load_dataset(cfg.test_path);
  }
  d.vocab = vocab::Vocabulary::build(d.train, d.test);
  return d;
}

std::vector<corpus::ActionSeq> pretraining_sequences(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<corpus::InstructionDoc> docs;
  if (!cfg.pretrain_corpus.empty()) {
    docs = corpus::read_instruction_corpus(cfg.pretrain_corpus);
  } else {
    if (!cfg.uses_synthetic()) {
      throw std::invalid_argument("rcplm needs pretrain_corpus when the dataset comes from files");
    }
    const auto world = corpus::make_world(cfg.synth);
    const std::uint64_t corpus_seed = seed + 0x9e3779b97f4a7c15ULL;
    const auto seqs = corpus::sample_action_sequences(world, cfg.pretrain_sequences, cfg.pretrain_sequence_len,
                                                      corpus_seed);
    std::ostringstream text;
    for (const auto& line : corpus::render_corpus(seqs, corpus_seed)) text << line << '\n';
    std::istringstream in(text.str());
    docs = corpus::read_instruction_corpus(in);
  }
  std::vector<corpus::ActionSeq> out;
  std::size_t skipped = 0;
  for (const auto& doc : docs) {
    auto parsed = corpus::parse_instructions(doc);
    skipped += parsed.skipped.size();
    if (!parsed.actions.steps.empty()) out.push_back(std::move(parsed.actions));
  }
  if (skipped > 0) spdlog::info("pretraining corpus: {} clauses skipped", skipped);
  if (out.empty()) throw std::invalid_argument("pretraining corpus has no parsable sequences");
  return out;
}

std::vector<metrics::PredictionRecord> predict_student(const student::StudentModel& model,
                                                       const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                                       std::size_t k) {
  std::vector<metrics::PredictionRecord> out;
  out.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    out.push_back(metrics::make_record(inst.id, model.predict(inst.frames).y_final, vocab.action_id(inst.target), k));
  }
  return out;
}

std::vector<metrics::PredictionRecord> predict_teacher(const teacher::TeacherModel& model,
                                                       const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                                       std::size_t k) {
  std::vector<metrics::PredictionRecord> out;
  out.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    const auto tokens = vocab.encode_sequence(inst.segments, model.config().context_len);
    out.push_back(metrics::make_record(inst.id, model.forward(tokens).y_action, vocab.action_id(inst.target), k));
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  RunReport report;
  report.config = cfg;
  report.rows = report_rows(cfg);
  auto flat = to_flat_json(cfg);
  write_text(out / "config.json", flat.dump(2) + "\n");

  for (auto seed : cfg.seeds) {
    report.seeds.push_back({.seed = seed, .metrics = {}, .seconds = {}});
    try {
      SeedRunner(cfg, seed, report.seeds.back()).run();
    } catch (const StageFailure& e) {
      report.failed_stage = e.what();
      spdlog::error("{}", e.what());
      break;
    }
  }

  {
    std::ofstream tsv(out / "report.tsv", std::ios::binary);
    write_report_tsv(report, tsv);
    std::ofstream md(out / "report.md", std::ios::binary);
    write_report_markdown(report, md);
  }
  std::ofstream timing(out / "timing.tsv", std::ios::binary);
  timing << "seed\tstage\tseconds\n";
  for (const auto& s : report.seeds) {
    for (const auto& [stage, secs] : s.seconds) timing << s.seed << '\t' << stage << '\t' << fmt::format("{:.3f}", secs) << '\n';
  }
  return report;
}

void write_report_tsv(const RunReport& report, std::ostream& os) {
  os << "row\tmetric\tmean\tsd\tn_seeds";
  for (const auto& s : report.seeds) os << "\tseed_" << s.seed;
  os << '\n';
  for (const auto& row : report.rows) {
    for (const auto& metric : kMetricNames) {
      const auto v = report.values(row, metric);
      if (v.empty()) continue;
      os << row << '\t' << metric << '\t' << fmt_value(report.mean(row, metric)) << '\t'
         << fmt_value(report.sd(row, metric)) << '\t' << v.size();
      for (const auto& s : report.seeds) {
        const auto r = s.metrics.find(row);
        os << '\t' << (r != s.metrics.end() && r->second.contains(metric) ? fmt_value(r->second.at(metric)) : "NA");
      }
      os << '\n';
    }
  }
  if (report.failed_stage) os << "# failed stage: " << *report.failed_stage << '\n';
}

void write_report_markdown(const RunReport& report, std::ostream& os) {
  const auto& c = report.config;
  os << "# Distillation report\n\n";
  if (report.failed_stage) {
    os << "**Incomplete run.** Failed stage: `" << *report.failed_stage << "`. Rows below cover completed stages only.\n\n";
  }
  os << fmt::format("Profile `{}`, {} seed(s), lambda_s {}, gamma {}, top_k {}, many-shot threshold {}{}.\n\n",
                    c.profile, report.seeds.size(), c.distill.lambda_s, c.distill.gamma,
                    c.distill.top_k ? std::to_string(*c.distill.top_k) : std::string("ALL"),
                    c.many_shot_threshold, c.many_shot_override ? " (overridden by explicit list)" : "");
  os << "Values are percentages, mean ± sample SD over seeds.\n\n";
  os << "| Model | Acc@1 | Rec@1 | MS-Rec@5 |\n|---|---|---|---|\n";
  for (const auto& row : report.rows) {
    if (report.values(row, kMetricNames[0]).empty()) continue;
    os << "| " << display_name(row);
    for (const auto& metric : kMetricNames) {
      if (report.values(row, metric).empty()) {
        os << " | -";
      } else {
        os << fmt::format(" | {:.2f} ± {:.2f}", 100.0 * report.mean(row, metric), 100.0 * report.sd(row, metric));
      }
    }
    os << " |\n";
  }
}

}  // namespace kd::harness
