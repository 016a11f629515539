#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "kd/corpus/dataset_io.hpp"
#include "kd/corpus/instructions.hpp"
#include "kd/corpus/synthetic.hpp"
#include "kd/ensemble/ensemble.hpp"
#include "kd/harness/config.hpp"
#include "kd/harness/pipeline.hpp"
#include "kd/harness/qualitative.hpp"
#include "kd/harness/sweep.hpp"
#include "kd/metrics/metrics.hpp"
#include "kd/nn/checkpoint.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"
#include "kd/vocab/class_stats.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace fs = std::filesystem;
using namespace kd;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::string profile;
  bool quiet = false;
};

harness::ExperimentConfig resolve(const Globals& g) {
  auto cfg = g.config_path.empty() ? harness::profile_defaults(g.profile.empty() ? "synth" : g.profile)
                                   : harness::load_config(g.config_path);
  nlohmann::json ov = nlohmann::json::object();
  if (!g.profile.empty()) ov["profile"] = g.profile;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(fmt::format("--set expects key=value, got '{}'", kv));
    ov[kv.substr(0, eq)] = harness::parse_value(kv.substr(eq + 1));
  }
  if (g.seed) ov["seeds"] = {*g.seed};
  if (!g.out.empty()) ov["output_dir"] = g.out;
  return harness::apply_overrides(cfg, ov);
}

fs::path out_dir(const harness::ExperimentConfig& cfg) {
  fs::path p(cfg.output_dir);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

vocab::Vocabulary load_or_build_vocab(const std::string& vocab_path, const corpus::Dataset& train,
                                      const corpus::Dataset& test) {
  if (!vocab_path.empty()) {
    std::ifstream in(vocab_path);
    if (!in) throw std::runtime_error(fmt::format("cannot open vocabulary '{}'", vocab_path));
    return vocab::Vocabulary::from_json(nlohmann::json::parse(in));
  }
  return vocab::Vocabulary::build(train, test);
}

vocab::Vocabulary read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open vocabulary '{}'", path));
  return vocab::Vocabulary::from_json(nlohmann::json::parse(in));
}

void save_vocab(const vocab::Vocabulary& v, const fs::path& dir) { write_file(dir / "vocab.json", v.to_json().dump(2) + "\n"); }

std::string checkpoint_kind(const nn::Checkpoint& ckpt) { return ckpt.config.value("kind", std::string()); }

std::set<int> read_many_shot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open many-shot file '{}'", path));
  const auto j = nlohmann::json::parse(in);
  return (j.is_object() ? j.at("classes") : j).get<std::set<int>>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal distillation from a text teacher into a frame-only student"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Flat JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Single seed (replaces the config's seed list)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--profile", g.profile, "Profile defaults: synth, epic, egtea");
  app.add_option("--set", g.sets, "Config override key=value (repeatable)");
  app.add_flag("--quiet", g.quiet, "Only warnings and errors");

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic train/test split (and optional instruction corpus)");
  int corpus_docs = 0;
  gen->add_option("--corpus-docs", corpus_docs, "Also write corpus.txt with this many documents");

  // extract-corpus
  auto* extract = app.add_subcommand("extract-corpus", "Parse instruction text into verb-object sequences");
  std::string corpus_in;
  extract->add_option("--input", corpus_in, "Instruction text, one document per line")->required()->check(CLI::ExistingFile);

  // shared dataset options
  std::string train_path, test_path, vocab_path;
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--train", train_path, "Training split (JSONL)")->required()->check(CLI::ExistingFile);
    sub->add_option("--test", test_path, "Test split (JSONL); joins the vocabulary")->check(CLI::ExistingFile);
    sub->add_option("--vocab", vocab_path, "Vocabulary JSON (default: built from --train and --test)")
        ->check(CLI::ExistingFile);
  };

  auto* pretrain = app.add_subcommand("pretrain-teacher", "MLM-pretrain the teacher encoder");
  add_data(pretrain);
  std::string pretrain_corpus;
  pretrain->add_option("--corpus", pretrain_corpus, "Instruction text (default: sampled from the synthetic chain)")
      ->check(CLI::ExistingFile);

  auto* tteach = app.add_subcommand("train-teacher", "Fine-tune the text teacher");
  add_data(tteach);
  std::string init_path;
  tteach->add_option("--init", init_path, "Pretrained encoder checkpoint")->check(CLI::ExistingFile);

  auto* tstud = app.add_subcommand("train-student", "Train the frame-only student (distilled when --teacher is given)");
  add_data(tstud);
  std::vector<std::string> teacher_paths;
  tstud->add_option("--teacher", teacher_paths, "Teacher checkpoint; repeat to ensemble")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Metrics from a prediction dump, or predictions from a checkpoint");
  std::string preds_path, many_shot_path, model_path, data_path;
  eval->add_option("--predictions", preds_path, "Prediction dump (JSONL)")->check(CLI::ExistingFile);
  eval->add_option("--many-shot", many_shot_path, "many_shot.json (or a JSON list of class ids)")->check(CLI::ExistingFile);
  eval->add_option("--model", model_path, "Teacher or student checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "Dataset to predict on")->check(CLI::ExistingFile);
  eval->add_option("--vocab", vocab_path, "Vocabulary JSON (with --model)")->check(CLI::ExistingFile);
  eval->add_option("--train", train_path, "Training split for many-shot counts (with --model)")->check(CLI::ExistingFile);

  auto* qual = app.add_subcommand("qualitative", "Side-by-side top-5 predictions of baseline, teacher and distilled");
  std::string base_ckpt, teach_ckpt, dist_ckpt;
  int qual_n = 20;
  qual->add_option("--baseline", base_ckpt)->required()->check(CLI::ExistingFile);
  qual->add_option("--teacher", teach_ckpt)->required()->check(CLI::ExistingFile);
  qual->add_option("--distilled", dist_ckpt)->required()->check(CLI::ExistingFile);
  qual->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  qual->add_option("--vocab", vocab_path)->required()->check(CLI::ExistingFile);
  qual->add_option("--n", qual_n, "Instances to sample");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the experiment for each value of one parameter");
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  sweep_cmd->add_option("--param", sweep_param, "lambda_s, gamma, top_k, ensemble_heads or strategy")->required();
  sweep_cmd->add_option("--values", sweep_values, "Values (comma separated or repeated)")->required()->delimiter(',');

  auto* run = app.add_subcommand("run", "Full pipeline over every seed");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(g.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    auto cfg = resolve(g);
    const std::uint64_t seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();

    if (*gen) {
      const auto dir = out_dir(cfg);
      const auto split = corpus::gen_synthetic(cfg.synth, seed);
      corpus::write_dataset(split.train, dir / "train.jsonl");
      corpus::write_dataset(split.test, dir / "test.jsonl");
      if (corpus_docs > 0) {
        const auto world = corpus::make_world(cfg.synth);
        const auto seqs = corpus::sample_action_sequences(world, corpus_docs, cfg.pretrain_sequence_len, seed);
        std::string text;
        for (const auto& line : corpus::render_corpus(seqs, seed)) text += line + "\n";
        write_file(dir / "corpus.txt", text);
      }
      spdlog::info("wrote {} train / {} test instances to {}", split.train.instances.size(),
                   split.test.instances.size(), dir.string());
    } else if (*extract) {
      const auto dir = out_dir(cfg);
      std::ofstream seqs(dir / "sequences.jsonl", std::ios::binary);
      std::vector<corpus::SkipRecord> skipped;
      std::size_t n = 0;
      for (const auto& doc : corpus::read_instruction_corpus(corpus_in)) {
        auto res = corpus::parse_instructions(doc);
        skipped.insert(skipped.end(), res.skipped.begin(), res.skipped.end());
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : res.actions.steps) steps.push_back({{"verb", s.verb}, {"object", s.object}});
        seqs << nlohmann::json{{"doc_id", doc.doc_id}, {"steps", steps}}.dump() << '\n';
        ++n;
      }
      std::ofstream skips(dir / "skips.tsv", std::ios::binary);
      corpus::write_skip_report(skipped, skips);
      spdlog::info("{} documents, {} clauses skipped", n, skipped.size());
    } else if (*pretrain || *tteach || *tstud) {
      const auto dir = out_dir(cfg);
      const auto train = corpus::load_dataset(train_path);
      const auto test = test_path.empty() ? corpus::Dataset{} : corpus::load_dataset(test_path);
      const auto v = load_or_build_vocab(vocab_path, train, test);
      save_vocab(v, dir);
      auto tcfg = cfg.teacher;
      tcfg.seed = seed;
      if (*pretrain) {
        auto run_cfg = cfg;
        if (!pretrain_corpus.empty()) run_cfg.pretrain_corpus = pretrain_corpus;
        const auto res = teacher::pretrain_mlm(harness::pretraining_sequences(run_cfg, seed), v, tcfg);
        nn::save_checkpoint(res.checkpoint, dir / "pretrain.json");
      } else if (*tteach) {
        std::optional<nn::Checkpoint> init;
        if (!init_path.empty()) init = nn::load_checkpoint(init_path);
        const auto model = teacher::finetune_teacher(train, v, tcfg, init ? &*init : nullptr);
        nn::save_checkpoint(model.to_checkpoint(), dir / "teacher.json");
      } else {
        auto scfg = cfg.student;
        scfg.seed = seed;
        std::vector<teacher::TeacherModel> teachers;
        for (const auto& p : teacher_paths) teachers.push_back(teacher::TeacherModel::from_checkpoint(nn::load_checkpoint(p)));
        if (teachers.size() <= 1) {
          std::optional<student::TeacherSource> source;
          if (!teachers.empty()) source.emplace(teachers.front());
          const auto model = student::train_student(train, v, scfg, cfg.distill, source ? &*source : nullptr);
          nn::save_checkpoint(model.to_checkpoint(), dir / "student.json");
        } else {
          std::vector<const teacher::TeacherModel*> ptrs;
          for (const auto& t : teachers) ptrs.push_back(&t);
          auto ecfg = cfg.ensemble;
          ecfg.seed = seed;
          const auto res = ensemble::train_ensemble_student(train, v, scfg, cfg.distill, ecfg, ptrs);
          nn::save_checkpoint(res.student.to_checkpoint(), dir / "student.json");
          nn::save_checkpoint(res.ensemble, dir / "ensemble.json");
        }
      }
      spdlog::info("wrote {}", dir.string());
    } else if (*eval) {
      std::vector<metrics::PredictionRecord> preds;
      std::set<int> many_shot;
      if (!preds_path.empty()) {
        if (many_shot_path.empty()) throw std::invalid_argument("eval --predictions needs --many-shot");
        preds = metrics::read_predictions(fs::path(preds_path));
        many_shot = read_many_shot(many_shot_path);
      } else {
        if (model_path.empty() || data_path.empty() || vocab_path.empty()) {
          throw std::invalid_argument("eval needs --predictions, or --model with --data and --vocab");
        }
        const auto v = read_vocab(vocab_path);
        const auto ds = corpus::load_dataset(data_path);
        const auto ckpt = nn::load_checkpoint(model_path);
        const auto kind = checkpoint_kind(ckpt);
        if (kind == "student") {
          preds = harness::predict_student(student::StudentModel::from_checkpoint(ckpt), ds, v);
        } else if (kind == "teacher") {
          preds = harness::predict_teacher(teacher::TeacherModel::from_checkpoint(ckpt), ds, v);
        } else {
          throw std::invalid_argument(fmt::format("checkpoint '{}' has kind '{}', expected teacher or student", model_path, kind));
        }
        if (!many_shot_path.empty()) {
          many_shot = read_many_shot(many_shot_path);
        } else if (!train_path.empty()) {
          many_shot = vocab::compute_class_stats(corpus::load_dataset(train_path), v, cfg.many_shot_threshold,
                                                 cfg.many_shot_override).many_shot;
        } else {
          throw std::invalid_argument("eval --model needs --many-shot or --train");
        }
        const auto dir = out_dir(cfg);
        metrics::write_predictions(preds, dir / "predictions.jsonl");
      }
      const auto rows = metrics::evaluate(preds, many_shot);
      std::ostringstream tsv;
      metrics::write_metric_report(rows, tsv);
      std::cout << tsv.str();
      if (!g.out.empty()) write_file(out_dir(cfg) / "metrics.tsv", tsv.str());
    } else if (*qual) {
      const auto v = read_vocab(vocab_path);
      const auto ds = corpus::load_dataset(data_path);
      const auto report = harness::dump_qualitative(
          student::StudentModel::from_checkpoint(nn::load_checkpoint(base_ckpt)),
          teacher::TeacherModel::from_checkpoint(nn::load_checkpoint(teach_ckpt)),
          student::StudentModel::from_checkpoint(nn::load_checkpoint(dist_ckpt)), ds, v, qual_n, seed);
      std::ostringstream md;
      harness::write_qualitative_markdown(report, v, md);
      write_file(out_dir(cfg) / "qualitative.md", md.str());
      std::cout << md.str();
    } else if (*sweep_cmd) {
      std::vector<nlohmann::json> values;
      for (const auto& s : sweep_values) values.push_back(harness::parse_value(s));
      const auto res = harness::sweep(cfg, sweep_param, values);
      std::ostringstream tsv;
      harness::write_sweep_tsv(res, tsv);
      write_file(out_dir(cfg) / fmt::format("sweep-{}.tsv", sweep_param), tsv.str());
      std::cout << tsv.str();
    } else if (*run) {
      const auto report = harness::run_experiment(cfg);
      std::ostringstream md;
      harness::write_report_markdown(report, md);
      std::cout << md.str();
      if (!report.ok()) return 2;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
