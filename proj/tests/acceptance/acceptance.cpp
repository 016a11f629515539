// Runs the eight acceptance criteria and prints one PASS/FAIL line each.
#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "grad_suite.hpp"
#include "kd/ensemble/ensemble.hpp"
#include "kd/harness/config.hpp"
#include "kd/harness/pipeline.hpp"
#include "kd/metrics/metrics.hpp"
#include "kd/nn/functional.hpp"
#include "kd/nn/optim.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"
#include "oracles.hpp"
#include "records.hpp"
#include "stats.hpp"

namespace fs = std::filesystem;
using namespace kd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> random_logits(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 2.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = d(rng);
  return v;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_suite(int trials) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cases = testkit::op_cases();
  for (auto& c : testkit::composite_cases()) cases.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_case;
  std::vector<std::string> failing;
  for (const auto& c : cases) {
    double case_worst = 0.0;
    for (int seed = 0; seed < trials; ++seed) {
      const auto r = c.run(static_cast<std::uint64_t>(seed), 1e-4);
      if (r.max_rel_error > case_worst) case_worst = r.max_rel_error;
    }
    if (case_worst >= 1e-4) failing.push_back(c.name);
    if (case_worst > worst) {
      worst = case_worst;
      worst_case = c.name;
    }
    fmt::print("  grad {:<28} max rel err {:.3e}\n", c.name, case_worst);
  }
  const double secs = seconds_since(t0);
  const bool pass = failing.empty() && secs < 300.0;
  return {pass, fmt::format("{} cases x {} trials, worst {:.3e} ({}), {:.1f} s{}", cases.size(), trials, worst,
                            worst_case, secs, failing.empty() ? "" : fmt::format(", failing: {}", failing))};
}

// 2 ------------------------------------------------------------------------

Outcome reduction_identities() {
  std::vector<std::string> notes;
  bool pass = true;
  auto check = [&](const std::string& name, double err) {
    const bool ok = err <= 1e-12;
    pass = pass && ok;
    notes.push_back(fmt::format("{} {:.1e}", name, err));
    fmt::print("  {:<34} max |diff| {:.3e} {}\n", name, err, ok ? "ok" : "FAIL");
  };

  auto sc = testkit::small_world(160, 40);
  const auto split = corpus::gen_synthetic(sc, 3);
  const auto v = vocab::Vocabulary::build(split.train, split.test);
  auto tc = testkit::quick_teacher(3, 1);
  tc.epochs = 2;
  const auto teacher = teacher::finetune_teacher(split.train, v, tc);
  const auto scfg = testkit::quick_student(2);

  // lambda_s = 0: the whole trajectory matches the baseline
  {
    student::TrainLog base_log, zero_log;
    const auto base = student::train_student(split.train, v, scfg, {}, nullptr, &base_log);
    student::DistillConfig dc;
    dc.lambda_s = 0.0;
    student::TeacherSource src(teacher);
    const auto zero = student::train_student(split.train, v, scfg, dc, &src, &zero_log);
    double err = base_log.step_loss.size() == zero_log.step_loss.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < std::min(base_log.step_loss.size(), zero_log.step_loss.size()); ++i) {
      err = std::max(err, std::abs(base_log.step_loss[i] - zero_log.step_loss[i]));
    }
    const auto a = base.to_checkpoint(), b = zero.to_checkpoint();
    for (const auto& [name, t] : a.params) {
      for (std::size_t i = 0; i < t.values.size(); ++i) err = std::max(err, std::abs(t.values[i] - b.params.at(name).values[i]));
    }
    check("lambda_s=0 trajectory", err);
  }

  // top_k = C: restricted loss is the plain softened KL
  {
    std::mt19937_64 rng(11);
    double err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int c = 2 + trial % 40;
      const double gamma = 0.5 + 0.05 * trial;
      const auto t = random_logits(c, rng), s = random_logits(c, rng);
      student::DistillConfig dc;
      dc.gamma = gamma;
      dc.top_k = c;
      const double full = nn::kl_divergence(nn::softmax_temp(t, gamma), nn::softmax_temp(s, gamma));
      err = std::max(err, std::abs(student::distill_loss(s, t, dc) - full));
    }
    check("top_k=C vs full softened KL", err);
  }

  // one teacher, one head: the ensemble path is the single-teacher path
  {
    student::DistillConfig dc;
    dc.lambda_s = 5.0;
    dc.top_k = 4;
    student::TrainLog single_log, ens_log;
    student::TeacherSource src(teacher);
    static_cast<void>(student::train_student(split.train, v, scfg, dc, &src, &single_log));
    ensemble::EnsembleConfig ec;
    ec.heads = 1;
    static_cast<void>(ensemble::train_ensemble_student(split.train, v, scfg, dc, ec, {&teacher}, &ens_log));
    double err = single_log.step_loss.size() == ens_log.step_loss.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < std::min(single_log.step_loss.size(), ens_log.step_loss.size()); ++i) {
      err = std::max(err, std::abs(single_log.step_loss[i] - ens_log.step_loss[i]));
    }
    check("n=1,H=1 ensemble vs single teacher", err);
  }

  // many_shot = all classes
  {
    std::mt19937_64 rng(12);
    double err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      int c = 0;
      const auto recs = testkit::random_records(rng, &c);
      std::set<int> all;
      for (int i = 0; i < c; ++i) all.insert(i);
      err = std::max(err, std::abs(metrics::many_shot_recall_at_k(recs, all, 5) - metrics::class_mean_recall(recs, 5)));
    }
    check("many_shot=all MS-Rec@5 vs Rec@5", err);
  }
  return {pass, fmt::format("{}", fmt::join(notes, "; "))};
}

// 3 ------------------------------------------------------------------------

Outcome numeric_oracles() {
  bool pass = true;
  std::vector<std::string> notes;
  // library vs oracle at 1e-9, and both vs the stated value at its precision
  auto check = [&](const std::string& name, double lib, double orc, double stated, double stated_tol) {
    const bool ok = std::abs(lib - orc) <= 1e-9 && std::abs(lib - stated) <= stated_tol;
    pass = pass && ok;
    notes.push_back(name);
    fmt::print("  {:<26} lib {:.12f} oracle {:.12f} stated {} {}\n", name, lib, orc, stated, ok ? "ok" : "FAIL");
  };

  check("KL([1,0]||[.5,.5])", nn::kl_divergence(nn::ProbDist({1.0, 0.0}), nn::ProbDist({0.5, 0.5})),
        oracle::kl({1.0, 0.0}, {0.5, 0.5}), 0.6931, 5e-5);
  {
    const std::vector<double> t{2.0, 1.0, 0.0}, s{0.0, 0.0, 0.0};
    student::DistillConfig dc;
    dc.top_k = 2;
    dc.gamma = 1.0;
    check("distill top-2 gamma 1", student::distill_loss(s, t, dc), oracle::distill(t, s, 2, 1.0), 0.1109, 5e-5);
  }
  {
    const std::vector<double> l{0.0, 0.0}, w{1.0, 2.0};
    check("weighted CE w=2", nn::weighted_cross_entropy(l, 1, w), oracle::weighted_ce(l, 1, w), 1.3863, 5e-5);
  }
  {
    nn::ParamStore store;
    auto x = store.add("x", nn::Matrix::Constant(1, 1, 1.0));
    x.node()->grad = nn::Matrix::Constant(1, 1, 1.0);
    nn::AdamW opt({0.1, 0.0});
    opt.step(store);
    check("AdamW step 1", x.value()(0, 0), oracle::adamw_scalar(1.0, {1.0}, 0.1, 0.0), 0.9, 1e-9);
  }
  {
    auto rec = [](int target, std::vector<int> ranked) {
      metrics::PredictionRecord r;
      r.target = target;
      double p = 0.9;
      for (int id : ranked) {
        r.topk.emplace_back(id, p);
        p /= 2.0;
      }
      return r;
    };
    const std::vector<metrics::PredictionRecord> acc{rec(0, {0}), rec(1, {1}), rec(2, {0})};
    check("Acc@1 two of three", metrics::acc_at_1(acc), oracle::acc1(testkit::to_oracle(acc)), 0.6667, 5e-5);
    const std::vector<metrics::PredictionRecord> recall{rec(0, {0}), rec(0, {1}), rec(1, {1})};
    check("Rec@1 hand enumeration", metrics::class_mean_recall(recall, 1),
          oracle::mean_recall(testkit::to_oracle(recall), 1, 2), 0.75, 1e-12);
    const std::vector<metrics::PredictionRecord> ms{rec(0, {1, 2, 3, 4, 5}), rec(0, {1, 0}), rec(1, {1}), rec(1, {0})};
    const std::set<int> only{0};
    check("MS-Rec@5 many-shot {0}", metrics::many_shot_recall_at_k(ms, only, 5),
          oracle::mean_recall(testkit::to_oracle(ms), 5, 6, &only), 0.5, 1e-12);
  }
  {
    nn::Rng rng(0);
    ensemble::EnsembleParams p(2, 1, 1, 1, rng);
    auto set = [](const nn::Var& v, double x) { v.node()->value = nn::Matrix::Constant(1, 1, x); };
    set(p.wk(0), 1.0);
    set(p.wq(0), 1.0);
    set(p.wk(1), 1.0);
    set(p.wq(1), 0.0);
    for (int h = 0; h < 2; ++h) {
      set(p.bk(h), 0.0);
      set(p.bq(h), 0.0);
    }
    nn::Matrix feats(2, 1);
    feats << std::log(9.0), 0.0;
    const auto alpha = ensemble::ensemble_weights(nn::RowVector::Constant(1, 1.0), feats, p);
    const auto want = oracle::ensemble_alpha({{{std::log(9.0)}, {0.0}}, {{std::log(9.0)}, {0.0}}}, {{1.0}, {0.0}});
    check("ensemble alpha_0", alpha[0], want[0], 0.7, 1e-12);
    check("ensemble alpha_1", alpha[1], want[1], 0.3, 1e-12);
  }
  return {pass, fmt::format("{} examples", notes.size())};
}

// 4-6 ----------------------------------------------------------------------

harness::ExperimentConfig reference_config(const fs::path& dir) {
  auto c = harness::profile_defaults("synth");
  c.output_dir = dir.string();
  c.seeds = {0, 1, 2, 3, 4};
  c.rows = {harness::kRowBaseline, harness::kRowLm, harness::kRowRcpLm};
  return c;
}

// Teacher sees only the last observed segment; the student keeps the full
// window with noised frames. Peaked transitions make the older segments
// informative, which a one-segment teacher cannot use.
harness::ExperimentConfig complementarity_config(const fs::path& dir) {
  auto c = reference_config(dir);
  c.rows = {harness::kRowBaseline, harness::kRowLm};
  c.teacher.context_len = 1;
  c.synth.n_states = 60;
  c.synth.transition_peak = 5.0;
  c.synth.emission_noise_sigma = 0.3;
  c.distill.lambda_s = 2.0;
  return c;
}

std::string paired_summary(const char* what, const stats::PairedTest& t) {
  return fmt::format("{} mean diff {:+.4f} (sd {:.4f}, t {:.2f}, one-sided p {:.4f})", what, t.mean_diff, t.sd_diff, t.t,
                     t.p_greater);
}

void print_rows(const harness::RunReport& r) {
  for (const auto& row : r.rows) {
    fmt::print("  {:<14} acc@1 {}  mean {:.4f}\n", row, r.values(row, "acc@1"), r.mean(row, "acc@1"));
  }
}

Outcome distillation_benefit(const harness::RunReport& r, double secs) {
  if (!r.ok()) return {false, "run failed: " + *r.failed_stage};
  const auto t = stats::paired_t(r.values(harness::kRowLm, "acc@1"), r.values(harness::kRowBaseline, "acc@1"));
  const bool pass = t.mean_diff > 0 && t.p_greater < 0.05;
  return {pass, fmt::format("{}; pipeline {:.0f} s", paired_summary("distilled - baseline Acc@1", t), secs)};
}

Outcome pretraining_benefit(const harness::RunReport& r) {
  if (!r.ok()) return {false, "run failed: " + *r.failed_stage};
  const auto t = stats::paired_t(r.values(harness::kRowRcpLm, "acc@1"), r.values(harness::kRowLm, "acc@1"));
  const bool pass = t.mean_diff >= 0.0;
  return {pass, paired_summary("pretrained - random-init teacher, distilled Acc@1", t)};
}

Outcome complementarity(const harness::RunReport& r) {
  if (!r.ok()) return {false, "run failed: " + *r.failed_stage};
  const double teacher = r.mean("teacher-lm", "acc@1"), base = r.mean(harness::kRowBaseline, "acc@1");
  const auto t = stats::paired_t(r.values(harness::kRowLm, "acc@1"), r.values(harness::kRowBaseline, "acc@1"));
  const bool pass = teacher < base && t.mean_diff > 0 && t.p_greater < 0.05;
  return {pass, fmt::format("teacher {:.4f} vs baseline {:.4f}; {}", teacher, base,
                            paired_summary("distilled - baseline Acc@1", t))};
}

// 7 ------------------------------------------------------------------------

Outcome metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int c = 0;
    const auto recs = testkit::random_records(rng, &c);
    const auto o = testkit::to_oracle(recs);
    std::set<int> ms;
    for (int i = 0; i < c; ++i) {
      if (rng() % 2) ms.insert(i);
    }
    err = std::max(err, std::abs(metrics::acc_at_1(recs) - oracle::acc1(o)));
    for (int k = 1; k <= 6; ++k) err = std::max(err, std::abs(metrics::class_mean_recall(recs, k) - oracle::mean_recall(o, k, c)));
    const bool any = std::any_of(recs.begin(), recs.end(), [&](const auto& r) { return ms.contains(r.target); });
    if (any) err = std::max(err, std::abs(metrics::many_shot_recall_at_k(recs, ms, 5) - oracle::mean_recall(o, 5, c, &ms)));
  }
  const double secs = seconds_since(t0);
  return {err <= 1e-12 && secs < 60.0, fmt::format("100 random instances, max |diff| {:.2e}, {:.2f} s", err, secs)};
}

// 8 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& kdistill, const fs::path& dir) {
  if (kdistill.empty()) return {false, "no kdistill binary given (--kdistill)"};
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    auto c = harness::profile_defaults("synth");
    nlohmann::json flat = {{"synth_n_train", 400},
                           {"synth_n_test", 100},
                           {"student_epochs", 2},
                           {"teacher_epochs", 2},
                           {"teacher_pretrain_steps", 40},
                           {"pretrain_sequences", 100},
                           {"seeds", {0, 1}},
                           {"rows", {"baseline", "lm", "rcplm", "ensemble"}}};
    std::ofstream(dir / "config.json") << flat.dump(2);
  }
  std::vector<fs::path> outs = {dir / "a", dir / "b"};
  for (const auto& out : outs) {
    const auto cmd = fmt::format("\"{}\" --quiet --config \"{}\" --out \"{}\" run > \"{}\" 2>&1", kdistill,
                                 (dir / "config.json").string(), out.string(), (dir / (out.filename().string() + ".log")).string());
    if (std::system(cmd.c_str()) != 0) return {false, fmt::format("'{}' failed", cmd)};
  }
  std::size_t files = 0, checkpoints = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(outs[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), outs[0]);
    if (rel == "timing.tsv" || rel == "config.json") continue;
    ++files;
    if (rel.parent_path().filename() == "ckpt") ++checkpoints;
    if (!fs::exists(outs[1] / rel) || slurp(e.path()) != slurp(outs[1] / rel)) differing.push_back(rel.string());
  }
  const bool reports = fs::exists(outs[0] / "report.tsv") && fs::exists(outs[0] / "report.md");
  const bool pass = differing.empty() && reports && checkpoints > 0;
  return {pass, fmt::format("{} files compared ({} checkpoints, reports {}); {} differ{}", files, checkpoints,
                            reports ? "present" : "missing", differing.size(),
                            differing.empty() ? "" : fmt::format(": {}", differing))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance-work";
  std::string kdistill;
  std::vector<int> only;
  int grad_trials = 100;
  app.add_option("--workdir", workdir, "Scratch directory for experiment runs");
  app.add_option("--kdistill", kdistill, "Path to the kdistill binary (criterion 8)");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--grad-trials", grad_trials, "Seeded trials per gradient case");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const fs::path work(workdir);
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  std::vector<std::pair<int, Outcome>> results;
  auto record = [&](int n, const std::string& title, Outcome o) {
    fmt::print("criterion {} {}: {}: {}\n", n, o.pass ? "PASS" : "FAIL", title, o.detail);
    std::fflush(stdout);
    results.emplace_back(n, std::move(o));
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, fmt::format("exception: {}", e.what())};
    }
  };

  if (wanted(1)) record(1, "gradient suite", guarded([&] { return gradient_suite(grad_trials); }));
  if (wanted(2)) record(2, "reduction identities", guarded(reduction_identities));
  if (wanted(3)) record(3, "numeric oracles", guarded(numeric_oracles));
  if (wanted(4) || wanted(5)) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<harness::RunReport> ref;
    std::string error;
    try {
      ref = harness::run_experiment(reference_config(work / "reference"));
      print_rows(*ref);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = seconds_since(t0);
    if (wanted(4)) {
      record(4, "distillation benefit", ref ? distillation_benefit(*ref, secs) : Outcome{false, error});
    }
    if (wanted(5)) record(5, "pretraining benefit", ref ? pretraining_benefit(*ref) : Outcome{false, error});
  }
  if (wanted(6)) {
    record(6, "complementarity", guarded([&] {
             const auto r = harness::run_experiment(complementarity_config(work / "complementarity"));
             print_rows(r);
             return complementarity(r);
           }));
  }
  if (wanted(7)) record(7, "metric oracle equivalence", guarded(metric_oracles));
  if (wanted(8)) record(8, "determinism", guarded([&] { return determinism(kdistill, work / "determinism"); }));

  std::size_t passed = 0;
  for (const auto& [n, o] : results) passed += o.pass ? 1 : 0;
  fmt::print("{}/{} criteria passed\n", passed, results.size());
  return passed == results.size() ? 0 : 1;
}
