#include "kd/harness/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace kd::harness {
namespace {

const std::set<std::string> kKnownRows = {kRowBaseline, kRowLm, kRowRcpLm, kRowEnsemble};

// Desk-scale model shapes shared by every profile.
void desk_models(ExperimentConfig& c) {
  c.teacher.hidden = 32;
  c.teacher.heads = 2;
  c.teacher.layers = 1;
  c.teacher.ff_mult = 4;
  c.teacher.lr = 3e-3;
  c.teacher.weight_decay = 1e-4;
  c.teacher.batch_size = 32;
  c.teacher.epochs = 8;
  c.teacher.pretrain_steps = 300;
  c.teacher.pretrain_batch = 32;

  c.student.hidden = 32;
  c.student.heads = 2;
  c.student.layers = 1;
  c.student.ff_mult = 4;
  c.student.lr = 3e-3;
  c.student.weight_decay = 1e-4;
  c.student.batch_size = 32;
  c.student.epochs = 8;

  c.ensemble.attention_dim = 16;
}

nlohmann::json strip_seed(nlohmann::json j) {
  j.erase("seed");
  return j;
}

void add_prefixed(nlohmann::json& flat, const std::string& prefix, const nlohmann::json& nested) {
  for (const auto& [k, v] : nested.items()) flat[prefix + k] = v;
}

nlohmann::json collect_prefixed(const nlohmann::json& flat, const std::string& prefix) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : flat.items()) {
    if (k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  }
  return out;
}

template <typename T>
T get_key(const nlohmann::json& flat, const std::string& key) {
  try {
    return flat.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config key '{}': {}", key, e.what()));
  }
}

template <typename T>
T decode_group(const nlohmann::json& flat, const std::string& prefix) {
  try {
    return collect_prefixed(flat, prefix).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config keys '{}*': {}", prefix, e.what()));
  }
}

// Decodes a complete flat object (every key present).
ExperimentConfig decode(const nlohmann::json& flat) {
  ExperimentConfig c;
  c.profile = get_key<std::string>(flat, "profile");
  c.train_path = get_key<std::string>(flat, "train_path");
  c.test_path = get_key<std::string>(flat, "test_path");
  c.pretrain_corpus = get_key<std::string>(flat, "pretrain_corpus");
  c.pretrain_sequences = get_key<int>(flat, "pretrain_sequences");
  c.pretrain_sequence_len = get_key<int>(flat, "pretrain_sequence_len");
  c.rows = get_key<std::vector<std::string>>(flat, "rows");
  c.seeds = get_key<std::vector<std::uint64_t>>(flat, "seeds");
  c.many_shot_threshold = get_key<int>(flat, "many_shot_threshold");
  if (!flat.at("many_shot_override").is_null()) {
    c.many_shot_override = get_key<std::vector<int>>(flat, "many_shot_override");
  }
  c.output_dir = get_key<std::string>(flat, "output_dir");

  c.synth = decode_group<corpus::SynthConfig>(flat, "synth_");
  c.teacher = decode_group<teacher::TeacherConfig>(flat, "teacher_");
  c.student = decode_group<student::StudentConfig>(flat, "student_");

  nlohmann::json distill = {{"lambda_s", flat.at("lambda_s")},
                            {"gamma", flat.at("gamma")},
                            {"top_k", flat.at("top_k")},
                            {"gamma_sq_scale", flat.at("gamma_sq_scale")}};
  try {
    distill.get_to(c.distill);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config distillation keys: {}", e.what()));
  }
  nlohmann::json ens = {{"ensemble_heads", flat.at("ensemble_heads")},
                        {"attention_dim", flat.at("ensemble_attention_dim")},
                        {"strategy", flat.at("ensemble_strategy")},
                        {"fixed_weights", flat.at("ensemble_fixed_weights")}};
  try {
    ens.get_to(c.ensemble);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config ensemble keys: {}", e.what()));
  }
  return c;
}

}  // namespace

bool ExperimentConfig::has_row(const std::string& row) const {
  return std::find(rows.begin(), rows.end(), row) != rows.end();
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (seeds.empty()) fail("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    fail(fmt::format("seeds must be distinct, got {}", seeds));
  }
  if (rows.empty()) fail("rows must not be empty");
  for (const auto& r : rows) {
    if (!kKnownRows.contains(r)) fail(fmt::format("unknown row '{}' (expected baseline, lm, rcplm, ensemble)", r));
  }
  if (std::set<std::string>(rows.begin(), rows.end()).size() != rows.size()) fail("rows must be distinct");
  if (train_path.empty() != test_path.empty()) fail("train_path and test_path must be given together");
  for (const auto* p : {&train_path, &test_path, &pretrain_corpus}) {
    if (!p->empty() && !std::filesystem::exists(*p)) fail(fmt::format("input file '{}' does not exist", *p));
  }
  if (uses_synthetic()) synth.validate();
  if (many_shot_threshold < 1) fail("many_shot_threshold must be >= 1");
  if (pretrain_sequences < 1 || pretrain_sequence_len < 1) fail("pretrain_sequences and pretrain_sequence_len must be >= 1");
  if (distill.gamma <= 0.0) fail("gamma must be > 0");
  if (distill.lambda_s < 0.0) fail("lambda_s must be >= 0");
  if (has_row(kRowEnsemble) && ensemble.strategy == ensemble::Strategy::kFixedWeights &&
      ensemble.fixed_weights.size() != 2) {
    fail("fixed_weights strategy needs one weight per teacher (2)");
  }
  if (output_dir.empty()) fail("output_dir must not be empty");
}

ExperimentConfig profile_defaults(const std::string& profile) {
  ExperimentConfig c;
  c.profile = profile;
  desk_models(c);
  if (profile == "synth") {
    c.distill.lambda_s = 20.0;
    c.distill.top_k.reset();
    c.pretrain_sequences = 4000;
    c.teacher.pretrain_steps = 2000;
  } else if (profile == "epic") {
    c.teacher.context_len = 5;
    c.distill.lambda_s = 20.0;
    c.teacher.weighted_ce = false;
    c.teacher.epochs = 8;
    c.distill.top_k = 50;
    c.teacher.lr = 1e-5;
    c.teacher.weight_decay = 1e-7;
  } else if (profile == "egtea") {
    c.teacher.context_len = 15;
    c.distill.lambda_s = 150.0;
    c.teacher.weighted_ce = true;
    c.teacher.epochs = 4;
    c.distill.top_k.reset();
    c.teacher.lr = 1e-5;
    c.teacher.weight_decay = 1e-7;
  } else {
    throw std::invalid_argument(fmt::format("unknown profile '{}' (expected synth, epic, egtea)", profile));
  }
  return c;
}

nlohmann::json to_flat_json(const ExperimentConfig& c) {
  nlohmann::json flat = {{"profile", c.profile},
                         {"train_path", c.train_path},
                         {"test_path", c.test_path},
                         {"pretrain_corpus", c.pretrain_corpus},
                         {"pretrain_sequences", c.pretrain_sequences},
                         {"pretrain_sequence_len", c.pretrain_sequence_len},
                         {"rows", c.rows},
                         {"seeds", c.seeds},
                         {"many_shot_threshold", c.many_shot_threshold},
                         {"many_shot_override", nullptr},
                         {"output_dir", c.output_dir}};
  if (c.many_shot_override) flat["many_shot_override"] = *c.many_shot_override;
  add_prefixed(flat, "synth_", c.synth);
  add_prefixed(flat, "teacher_", strip_seed(c.teacher));
  add_prefixed(flat, "student_", strip_seed(c.student));
  const nlohmann::json distill = c.distill;
  for (const auto& [k, v] : distill.items()) flat[k] = v;
  const nlohmann::json ens = c.ensemble;
  flat["ensemble_heads"] = ens.at("ensemble_heads");
  flat["ensemble_attention_dim"] = ens.at("attention_dim");
  flat["ensemble_strategy"] = ens.at("strategy");
  flat["ensemble_fixed_weights"] = ens.at("fixed_weights");
  return flat;
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw std::invalid_argument("config: expected a flat JSON object");
  nlohmann::json flat = to_flat_json(cfg);
  if (overrides.contains("profile") && overrides.at("profile") != flat.at("profile")) {
    flat = to_flat_json(profile_defaults(get_key<std::string>(overrides, "profile")));
  }
  for (const auto& [k, v] : overrides.items()) {
    if (!flat.contains(k)) throw std::invalid_argument(fmt::format("config: unknown key '{}'", k));
    flat[k] = v;
  }
  return decode(flat);
}

ExperimentConfig from_flat_json(const nlohmann::json& flat) {
  std::string profile = "synth";
  if (flat.is_object() && flat.contains("profile")) profile = get_key<std::string>(flat, "profile");
  return apply_overrides(profile_defaults(profile), flat);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open config '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("config '{}': {}", path.string(), e.what()));
  }
  return from_flat_json(j);
}

nlohmann::json parse_value(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) return text;
  return j;
}

}  // namespace kd::harness
