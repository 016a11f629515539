#include "kd/teacher/teacher.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kd/nn/ops.hpp"
#include "kd/nn/optim.hpp"
#include "kd/vocab/class_stats.hpp"

namespace kd::teacher {

using nn::Matrix;
using nn::Var;

void to_json(nlohmann::json& j, const TeacherConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden},
                     {"heads", c.heads},
                     {"layers", c.layers},
                     {"ff_mult", c.ff_mult},
                     {"context_len", c.context_len},
                     {"epochs", c.epochs},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"lambda_action", c.lambda_action},
                     {"lambda_verb", c.lambda_verb},
                     {"lambda_object", c.lambda_object},
                     {"weighted_ce", c.weighted_ce},
                     {"mask_rate", c.mask_rate},
                     {"pretrain_steps", c.pretrain_steps},
                     {"pretrain_batch", c.pretrain_batch},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TeacherConfig& c) {
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("hidden", c.hidden);
  opt("heads", c.heads);
  opt("layers", c.layers);
  opt("ff_mult", c.ff_mult);
  opt("context_len", c.context_len);
  opt("epochs", c.epochs);
  opt("lr", c.lr);
  opt("weight_decay", c.weight_decay);
  opt("batch_size", c.batch_size);
  opt("lambda_action", c.lambda_action);
  opt("lambda_verb", c.lambda_verb);
  opt("lambda_object", c.lambda_object);
  opt("weighted_ce", c.weighted_ce);
  opt("mask_rate", c.mask_rate);
  opt("pretrain_steps", c.pretrain_steps);
  opt("pretrain_batch", c.pretrain_batch);
  opt("seed", c.seed);
}

namespace {

nlohmann::json dims_json(const TeacherDims& d) {
  return {{"tokens", d.tokens}, {"actions", d.actions}, {"verbs", d.verbs}, {"objects", d.objects}};
}

TeacherDims dims_from_json(const nlohmann::json& j) {
  return {j.at("tokens").get<int>(), j.at("actions").get<int>(), j.at("verbs").get<int>(),
          j.at("objects").get<int>()};
}

std::vector<double> row_values(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

nn::ProbDist softmax_row(const Matrix& logits) {
  std::vector<double> v = row_values(logits);
  return nn::softmax_temp(v, 1.0);
}

}  // namespace

TeacherModel::TeacherModel(TeacherConfig cfg, TeacherDims dims) : cfg_(cfg), dims_(dims) {
  if (dims.tokens <= vocab::kNumSpecialTokens || dims.actions <= 0 || dims.verbs <= 0 || dims.objects <= 0) {
    throw std::invalid_argument("TeacherModel: empty label space");
  }
  if (cfg.context_len < 1) {
    throw std::invalid_argument(fmt::format("TeacherModel: context_len must be >= 1, got {}", cfg.context_len));
  }
  nn::Rng rng(cfg.seed);
  const Eigen::Index h = cfg.hidden;
  token_embedding_ = store_.add("embed.token", nn::random_normal(dims.tokens, h, 1.0, rng));
  position_embedding_ = store_.add("embed.position", nn::random_normal(cfg.sequence_length(), h, 1.0, rng));
  encoder_ = nn::TransformerStack(store_, "encoder", {cfg.hidden, cfg.heads, cfg.layers, cfg.ff_mult}, rng);
  action_w_ = store_.add("head.action.w", nn::init_weight(h, dims.actions, rng));
  action_b_ = store_.add("head.action.b", Matrix::Zero(1, dims.actions));
  verb_w_ = store_.add("head.verb.w", nn::init_weight(h, dims.verbs, rng));
  verb_b_ = store_.add("head.verb.b", Matrix::Zero(1, dims.verbs));
  object_w_ = store_.add("head.object.w", nn::init_weight(h, dims.objects, rng));
  object_b_ = store_.add("head.object.b", Matrix::Zero(1, dims.objects));
  mlm_w_ = store_.add("mlm.w", nn::init_weight(h, dims.tokens, rng));
  mlm_b_ = store_.add("mlm.b", Matrix::Zero(1, dims.tokens));
}

Var TeacherModel::encode(std::span<const int> tokens, int* cls_position) const {
  if (static_cast<int>(tokens.size()) != cfg_.sequence_length()) {
    throw std::invalid_argument(
        fmt::format("teacher: expected {} tokens, got {}", cfg_.sequence_length(), tokens.size()));
  }
  std::vector<bool> pad(tokens.size());
  int cls = -1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= dims_.tokens) {
      throw std::out_of_range(fmt::format("teacher: token id {} outside [0, {})", tokens[i], dims_.tokens));
    }
    pad[i] = tokens[i] == vocab::kPad;
    if (tokens[i] == vocab::kCls && cls < 0) cls = static_cast<int>(i);
  }
  if (cls < 0) throw std::invalid_argument("teacher: sequence has no CLS token");
  if (cls_position) *cls_position = cls;

  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  const Var x = nn::add(nn::embedding(token_embedding_, tokens), nn::embedding(position_embedding_, positions));
  const Matrix mask = nn::key_padding_mask(pad);
  return encoder_.forward(x, &mask);
}

TeacherGraph TeacherModel::forward_graph(std::span<const int> tokens) const {
  int cls = 0;
  const Var hidden = encode(tokens, &cls);
  TeacherGraph g;
  g.f_txt = nn::slice_rows(hidden, cls, 1);
  g.action_logits = nn::linear(g.f_txt, action_w_, action_b_);
  g.verb_logits = nn::linear(g.f_txt, verb_w_, verb_b_);
  g.object_logits = nn::linear(g.f_txt, object_w_, object_b_);
  return g;
}

TeacherOutput TeacherModel::forward(std::span<const int> tokens) const {
  const TeacherGraph g = forward_graph(tokens);
  TeacherOutput out;
  out.f_txt = g.f_txt.value();
  out.action_logits = row_values(g.action_logits.value());
  out.y_action = nn::softmax_temp(out.action_logits, 1.0);
  out.y_verb = softmax_row(g.verb_logits.value());
  out.y_object = softmax_row(g.object_logits.value());
  return out;
}

Var TeacherModel::mlm_logits(std::span<const int> tokens) const {
  return nn::linear(encode(tokens, nullptr), mlm_w_, mlm_b_);
}

nn::Checkpoint TeacherModel::to_checkpoint() const {
  nlohmann::json config = cfg_;
  config["dims"] = dims_json(dims_);
  config["kind"] = "teacher";
  return nn::capture(store_, config);
}

TeacherModel TeacherModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (!ckpt.config.contains("dims")) {
    throw std::invalid_argument("teacher checkpoint: config has no 'dims'");
  }
  TeacherModel model(ckpt.config.get<TeacherConfig>(), dims_from_json(ckpt.config.at("dims")));
  nn::restore(ckpt, model.store_);
  return model;
}

nn::Checkpoint TeacherModel::encoder_checkpoint() const {
  nlohmann::json config = cfg_;
  config["dims"] = dims_json(dims_);
  config["kind"] = "teacher-encoder";
  nn::Checkpoint ckpt = nn::capture(store_, config, "embed.");
  nn::Checkpoint enc = nn::capture(store_, config, "encoder.");
  ckpt.params.merge(enc.params);
  return ckpt;
}

void TeacherModel::load_encoder(const nn::Checkpoint& ckpt) {
  if (!ckpt.config.contains("dims")) {
    throw std::invalid_argument("teacher init checkpoint: config has no 'dims'");
  }
  const TeacherDims theirs = dims_from_json(ckpt.config.at("dims"));
  const TeacherConfig their_cfg = ckpt.config.get<TeacherConfig>();
  std::vector<std::string> diffs;
  auto check = [&diffs](const char* what, int mine, int other) {
    if (mine != other) diffs.push_back(fmt::format("{}: checkpoint {} vs model {}", what, other, mine));
  };
  check("tokens", dims_.tokens, theirs.tokens);
  check("hidden", cfg_.hidden, their_cfg.hidden);
  check("heads", cfg_.heads, their_cfg.heads);
  check("layers", cfg_.layers, their_cfg.layers);
  check("ff_mult", cfg_.ff_mult, their_cfg.ff_mult);
  check("sequence_length", cfg_.sequence_length(), their_cfg.sequence_length());
  if (!diffs.empty()) {
    std::string msg = "teacher init checkpoint does not match the model:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw std::invalid_argument(msg);
  }
  nn::restore(ckpt, store_, "embed.");
  nn::restore(ckpt, store_, "encoder.");
}

Var teacher_loss(const TeacherGraph& graph, const vocab::ActionLabel& target, const LossLambdas& lambdas,
                 std::span<const double> action_weights) {
  if (lambdas.action < 0 || lambdas.verb < 0 || lambdas.object < 0) {
    throw std::invalid_argument("teacher_loss: negative lambda");
  }
  double w = 1.0;
  if (!action_weights.empty()) {
    if (static_cast<Eigen::Index>(action_weights.size()) != graph.action_logits.cols()) {
      throw std::invalid_argument("teacher_loss: weight vector length differs from class count");
    }
    w = action_weights[static_cast<std::size_t>(target.action_id)];
  }
  Var loss = nn::scale(nn::weighted_cross_entropy(graph.action_logits, target.action_id, w), lambdas.action);
  if (lambdas.object != 0.0) {
    loss = nn::add(loss, nn::scale(nn::weighted_cross_entropy(graph.object_logits, target.object_id, 1.0),
                                   lambdas.object));
  }
  if (lambdas.verb != 0.0) {
    loss = nn::add(loss, nn::scale(nn::weighted_cross_entropy(graph.verb_logits, target.verb_id, 1.0),
                                   lambdas.verb));
  }
  return loss;
}

double teacher_loss(const TeacherOutput& out, const vocab::ActionLabel& target, const LossLambdas& lambdas,
                    std::span<const double> action_weights) {
  if (lambdas.action < 0 || lambdas.verb < 0 || lambdas.object < 0) {
    throw std::invalid_argument("teacher_loss: negative lambda");
  }
  auto ce = [](const nn::ProbDist& p, int target_id, double w) {
    if (w == 0.0) return 0.0;
    return -w * std::log(p[static_cast<std::size_t>(target_id)]);
  };
  double w = 1.0;
  if (!action_weights.empty()) {
    if (action_weights.size() != out.y_action.size()) {
      throw std::invalid_argument("teacher_loss: weight vector length differs from class count");
    }
    w = action_weights[static_cast<std::size_t>(target.action_id)];
  }
  return lambdas.action * ce(out.y_action, target.action_id, w) +
         lambdas.object * ce(out.y_object, target.object_id, 1.0) +
         lambdas.verb * ce(out.y_verb, target.verb_id, 1.0);
}

std::vector<TeacherExample> make_examples(const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                          int context_len) {
  std::vector<TeacherExample> out;
  out.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    out.push_back({vocab.encode_sequence(inst.segments, context_len), vocab.label(inst.target)});
  }
  return out;
}

namespace {

nn::AdamW make_optimizer(const TeacherConfig& cfg) {
  nn::AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  return nn::AdamW(oc);
}

// Drops steps whose verb or object is outside the vocabulary.
std::vector<corpus::ActionSeq> filter_corpus(const std::vector<corpus::ActionSeq>& corpus,
                                             const vocab::Vocabulary& vocab, std::size_t& dropped_steps) {
  std::vector<corpus::ActionSeq> out;
  for (const auto& seq : corpus) {
    corpus::ActionSeq kept;
    for (const auto& s : seq.steps) {
      try {
        static_cast<void>(vocab.verb_id(s.verb));
        static_cast<void>(vocab.object_id(s.object));
        kept.steps.push_back(s);
      } catch (const std::invalid_argument&) {
        ++dropped_steps;
      }
    }
    if (!kept.steps.empty()) out.push_back(std::move(kept));
  }
  return out;
}

}  // namespace

PretrainResult pretrain_mlm(const std::vector<corpus::ActionSeq>& corpus, const vocab::Vocabulary& vocab,
                            const TeacherConfig& cfg) {
  if (cfg.mask_rate <= 0.0) throw std::invalid_argument("pretrain_mlm: nothing to mask (mask_rate must be > 0)");
  if (cfg.mask_rate >= 1.0) throw std::invalid_argument("pretrain_mlm: mask_rate must be < 1");
  if (corpus.empty()) throw std::invalid_argument("pretrain_mlm: empty corpus");

  std::size_t dropped = 0;
  const auto seqs = filter_corpus(corpus, vocab, dropped);
  if (dropped > 0) spdlog::info("pretrain_mlm: dropped {} steps with labels outside the vocabulary", dropped);
  if (seqs.empty()) throw std::invalid_argument("pretrain_mlm: no corpus sequence uses the vocabulary");

  TeacherModel model(cfg, TeacherDims::from(vocab));
  nn::AdamW opt = make_optimizer(cfg);
  nn::Rng rng(cfg.seed ^ 0x6d6c6dULL);
  std::uniform_int_distribution<std::size_t> pick_seq(0, seqs.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int first_label = vocab::kNumSpecialTokens;
  std::uniform_int_distribution<int> random_label(first_label, vocab.num_tokens() - 1);

  PretrainResult result;
  for (int step = 0; step < cfg.pretrain_steps; ++step) {
    model.params().zero_grad();
    Var total;
    int used = 0;
    for (int b = 0; b < cfg.pretrain_batch; ++b) {
      const auto& seq = seqs[pick_seq(rng)];
      std::uniform_int_distribution<std::size_t> pick_end(1, seq.steps.size());
      const std::size_t end = pick_end(rng);
      const std::size_t begin = end > static_cast<std::size_t>(cfg.context_len) ? end - cfg.context_len : 0;
      corpus::ActionSeq window;
      window.steps.assign(seq.steps.begin() + static_cast<std::ptrdiff_t>(begin),
                          seq.steps.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> tokens = vocab.encode_sequence(window, cfg.context_len);

      std::vector<int> maskable;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!vocab.is_special(tokens[i])) maskable.push_back(static_cast<int>(i));
      }
      if (maskable.empty()) {
        ++result.log.skipped;
        continue;
      }
      const auto n_mask = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(cfg.mask_rate * static_cast<double>(maskable.size()))));
      std::shuffle(maskable.begin(), maskable.end(), rng);
      maskable.resize(n_mask);
      std::sort(maskable.begin(), maskable.end());

      std::vector<int> originals;
      for (int pos : maskable) {
        originals.push_back(tokens[static_cast<std::size_t>(pos)]);
        const double u = unit(rng);
        if (u < 0.8) {
          tokens[static_cast<std::size_t>(pos)] = vocab::kMask;
        } else if (u < 0.9) {
          tokens[static_cast<std::size_t>(pos)] = random_label(rng);
        }
      }
      const Var logits = model.mlm_logits(tokens);
      Var loss;
      for (std::size_t m = 0; m < maskable.size(); ++m) {
        const Var ce = nn::weighted_cross_entropy(nn::slice_rows(logits, maskable[m], 1), originals[m], 1.0);
        loss = loss.defined() ? nn::add(loss, ce) : ce;
      }
      loss = nn::scale(loss, 1.0 / static_cast<double>(maskable.size()));
      total = total.defined() ? nn::add(total, loss) : loss;
      ++used;
    }
    if (used == 0) continue;
    total = nn::scale(total, 1.0 / used);
    nn::backward(total);
    opt.step(model.params());
    result.log.step_loss.push_back(total.item());
  }
  result.checkpoint = model.encoder_checkpoint();
  return result;
}

TeacherModel finetune_teacher(const corpus::Dataset& train, const vocab::Vocabulary& vocab,
                              const TeacherConfig& cfg, const nn::Checkpoint* init, TrainLog* log) {
  if (train.instances.empty()) throw std::invalid_argument("finetune_teacher: empty training set");
  if (cfg.batch_size < 1) throw std::invalid_argument("finetune_teacher: batch_size must be >= 1");
  TeacherModel model(cfg, TeacherDims::from(vocab));
  if (init) model.load_encoder(*init);

  const auto examples = make_examples(train, vocab, cfg.context_len);
  std::vector<double> weights;
  if (cfg.weighted_ce) weights = vocab::class_weights(vocab::class_counts(train, vocab));
  const LossLambdas lambdas{cfg.lambda_action, cfg.lambda_verb, cfg.lambda_object};

  nn::AdamW opt = make_optimizer(cfg);
  nn::Rng rng(cfg.seed ^ 0x7465616368ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      model.params().zero_grad();
      Var total;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = examples[order[i]];
        const Var l = teacher_loss(model.forward_graph(ex.tokens), ex.target, lambdas, weights);
        total = total.defined() ? nn::add(total, l) : l;
      }
      total = nn::scale(total, 1.0 / static_cast<double>(stop - start));
      nn::backward(total);
      opt.step(model.params());
      epoch_sum += total.item() * static_cast<double>(stop - start);
      if (log) log->step_loss.push_back(total.item());
    }
    const double epoch_loss = epoch_sum / static_cast<double>(order.size());
    if (log) log->epoch_loss.push_back(epoch_loss);
    spdlog::debug("teacher epoch {}: loss {:.6f}", epoch, epoch_loss);
  }
  return model;
}

std::vector<ScoredAction> teacher_predict_topk(const TeacherModel& model, const vocab::Vocabulary& vocab,
                                               std::span<const int> tokens, int k) {
  if (k < 1 || k > model.dims().actions) {
    throw std::invalid_argument(fmt::format("teacher_predict_topk: k={} outside [1, {}]", k, model.dims().actions));
  }
  const TeacherOutput out = model.forward(tokens);
  std::vector<ScoredAction> result;
  for (int id : nn::top_k_indices(out.y_action.values(), static_cast<std::size_t>(k))) {
    result.push_back({vocab.label_of(id), out.y_action[static_cast<std::size_t>(id)]});
  }
  return result;
}

}  // namespace kd::teacher
