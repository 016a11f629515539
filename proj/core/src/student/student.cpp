#include "kd/student/student.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kd/nn/ops.hpp"
#include "kd/nn/optim.hpp"

namespace kd::student {

using nn::Matrix;
using nn::Var;

NLOHMANN_JSON_SERIALIZE_ENUM(IntermediateTarget, {{IntermediateTarget::kCurrent, "current"},
                                                  {IntermediateTarget::kNext, "next"}})

void to_json(nlohmann::json& j, const StudentConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden},
                     {"heads", c.heads},
                     {"layers", c.layers},
                     {"ff_mult", c.ff_mult},
                     {"max_frames", c.max_frames},
                     {"mu_intermediate", c.mu_intermediate},
                     {"mu_future_feature", c.mu_future_feature},
                     {"intermediate_target", c.intermediate_target},
                     {"epochs", c.epochs},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, StudentConfig& c) {
  auto opt = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("hidden", c.hidden);
  opt("heads", c.heads);
  opt("layers", c.layers);
  opt("ff_mult", c.ff_mult);
  opt("max_frames", c.max_frames);
  opt("mu_intermediate", c.mu_intermediate);
  opt("mu_future_feature", c.mu_future_feature);
  if (j.contains("intermediate_target")) {
    const auto name = j.at("intermediate_target").get<std::string>();
    if (name != "current" && name != "next") {
      throw std::invalid_argument(fmt::format("intermediate_target must be 'current' or 'next', got '{}'", name));
    }
    c.intermediate_target = name == "next" ? IntermediateTarget::kNext : IntermediateTarget::kCurrent;
  }
  opt("epochs", c.epochs);
  opt("lr", c.lr);
  opt("weight_decay", c.weight_decay);
  opt("batch_size", c.batch_size);
  opt("seed", c.seed);
}

void to_json(nlohmann::json& j, const DistillConfig& c) {
  j = nlohmann::json{{"lambda_s", c.lambda_s}, {"gamma", c.gamma}, {"gamma_sq_scale", c.gamma_sq_scale}};
  if (c.top_k) {
    j["top_k"] = *c.top_k;
  } else {
    j["top_k"] = "ALL";
  }
}

void from_json(const nlohmann::json& j, DistillConfig& c) {
  if (j.contains("lambda_s")) j.at("lambda_s").get_to(c.lambda_s);
  if (j.contains("gamma")) j.at("gamma").get_to(c.gamma);
  if (j.contains("gamma_sq_scale")) j.at("gamma_sq_scale").get_to(c.gamma_sq_scale);
  if (j.contains("top_k")) {
    const auto& k = j.at("top_k");
    if (k.is_string()) {
      if (k.get<std::string>() != "ALL") {
        throw std::invalid_argument(fmt::format("top_k must be an integer or \"ALL\", got '{}'", k.get<std::string>()));
      }
      c.top_k.reset();
    } else if (k.is_null()) {
      c.top_k.reset();
    } else {
      c.top_k = k.get<int>();
    }
  }
}

namespace {

std::vector<double> row_values(const Matrix& m, Eigen::Index row) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(row, c);
  return v;
}

std::vector<int> selected_classes(std::span<const double> scores, const DistillConfig& cfg) {
  const auto c = scores.size();
  if (cfg.gamma <= 0.0) throw std::invalid_argument(fmt::format("distill_loss: gamma must be > 0, got {}", cfg.gamma));
  if (cfg.top_k && (*cfg.top_k < 1 || static_cast<std::size_t>(*cfg.top_k) > c)) {
    throw std::invalid_argument(fmt::format("distill_loss: top_k={} outside [1, {}]", *cfg.top_k, c));
  }
  return nn::top_k_indices(scores, cfg.top_k ? static_cast<std::size_t>(*cfg.top_k) : c);
}

Var student_restricted_log_probs(const Var& student_logits, std::span<const int> s, double gamma) {
  return nn::log_softmax_rows(nn::scale(nn::select_cols(student_logits, s), 1.0 / gamma));
}

}  // namespace

StudentModel::StudentModel(StudentConfig cfg, StudentDims dims) : cfg_(cfg), dims_(dims) {
  if (dims.feature_dim <= 0 || dims.actions <= 0) {
    throw std::invalid_argument("StudentModel: feature_dim and actions must be positive");
  }
  if (cfg.max_frames < 1) throw std::invalid_argument("StudentModel: max_frames must be >= 1");
  nn::Rng rng(cfg.seed);
  const Eigen::Index h = cfg.hidden;
  bb1_w_ = store_.add("backbone.l1.w", nn::init_weight(dims.feature_dim, h, rng));
  bb1_b_ = store_.add("backbone.l1.b", Matrix::Zero(1, h));
  bb2_w_ = store_.add("backbone.l2.w", nn::init_weight(h, h, rng));
  bb2_b_ = store_.add("backbone.l2.b", Matrix::Zero(1, h));
  position_ = store_.add("decoder_pos", nn::random_normal(cfg.max_frames, h, 1.0, rng));
  decoder_ = nn::TransformerStack(store_, "decoder", {cfg.hidden, cfg.heads, cfg.layers, cfg.ff_mult}, rng);
  cls_w_ = store_.add("classifier.w", nn::init_weight(h, dims.actions, rng));
  cls_b_ = store_.add("classifier.b", Matrix::Zero(1, dims.actions));
  fut_w_ = store_.add("future.w", nn::init_weight(h, h, rng));
  fut_b_ = store_.add("future.b", Matrix::Zero(1, h));
}

StudentGraph StudentModel::forward_graph(const Matrix& frames) const {
  const Eigen::Index t = frames.rows();
  if (t < 1) throw std::invalid_argument("student: need at least one frame");
  if (t > cfg_.max_frames) {
    throw std::invalid_argument(fmt::format("student: {} frames exceed max_frames {}", t, cfg_.max_frames));
  }
  if (frames.cols() != dims_.feature_dim) {
    throw std::invalid_argument(
        fmt::format("student: frame dim {} does not match model dim {}", frames.cols(), dims_.feature_dim));
  }
  StudentGraph g;
  const Var x = Var::constant(frames);
  g.z = nn::linear(nn::gelu(nn::linear(x, bb1_w_, bb1_b_)), bb2_w_, bb2_b_);
  const Matrix mask = nn::causal_mask(t);
  g.f_v = decoder_.forward(nn::add(g.z, nn::slice_rows(position_, 0, t)), &mask);
  g.step_logits = nn::linear(g.f_v, cls_w_, cls_b_);
  g.final_logits = nn::slice_rows(g.step_logits, t - 1, 1);
  g.future = nn::linear(g.f_v, fut_w_, fut_b_);
  return g;
}

StudentOutput StudentModel::predict(const Matrix& frames) const {
  const StudentGraph g = forward_graph(frames);
  StudentOutput out;
  out.z = g.z.value();
  out.f_v = g.f_v.value();
  out.future = g.future.value();
  const Matrix& logits = g.step_logits.value();
  for (Eigen::Index j = 0; j < logits.rows(); ++j) {
    out.y_steps.push_back(nn::softmax_temp(row_values(logits, j), 1.0));
  }
  out.final_logits = row_values(logits, logits.rows() - 1);
  out.y_final = out.y_steps.back();
  return out;
}

nn::Checkpoint StudentModel::to_checkpoint() const {
  nlohmann::json config = cfg_;
  config["dims"] = {{"feature_dim", dims_.feature_dim}, {"actions", dims_.actions}};
  config["kind"] = "student";
  return nn::capture(store_, config);
}

StudentModel StudentModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (!ckpt.config.contains("dims")) throw std::invalid_argument("student checkpoint: config has no 'dims'");
  const auto& d = ckpt.config.at("dims");
  StudentModel model(ckpt.config.get<StudentConfig>(), {d.at("feature_dim").get<int>(), d.at("actions").get<int>()});
  nn::restore(ckpt, model.store_);
  return model;
}

Var avt_loss(const StudentGraph& graph, int target, std::span<const int> intermediate, const AuxWeights& aux,
             const Matrix* frozen_next) {
  const Eigen::Index t = graph.step_logits.rows();
  Var loss = nn::weighted_cross_entropy(graph.final_logits, target, 1.0);
  if (aux.mu_intermediate != 0.0) {
    if (static_cast<Eigen::Index>(intermediate.size()) != t) {
      throw std::invalid_argument(
          fmt::format("avt_loss: {} intermediate labels for {} frames", intermediate.size(), t));
    }
    Var steps;
    for (Eigen::Index j = 0; j < t; ++j) {
      const Var ce = nn::weighted_cross_entropy(nn::slice_rows(graph.step_logits, j, 1),
                                                intermediate[static_cast<std::size_t>(j)], 1.0);
      steps = steps.defined() ? nn::add(steps, ce) : ce;
    }
    loss = nn::add(loss, nn::scale(steps, aux.mu_intermediate / static_cast<double>(t)));
  }
  if (aux.mu_future_feature != 0.0 && t > 1) {
    const Var pred = nn::slice_rows(graph.future, 0, t - 1);
    const Var next = frozen_next ? Var::constant(*frozen_next) : nn::stop_gradient(nn::slice_rows(graph.z, 1, t - 1));
    loss = nn::add(loss, nn::scale(nn::squared_error(pred, next), aux.mu_future_feature / static_cast<double>(t - 1)));
  }
  return loss;
}

double avt_loss(const StudentOutput& out, int target, std::span<const int> intermediate, const AuxWeights& aux) {
  const auto t = out.y_steps.size();
  double loss = -std::log(out.y_final[static_cast<std::size_t>(target)]);
  if (aux.mu_intermediate != 0.0) {
    if (intermediate.size() != t) {
      throw std::invalid_argument(fmt::format("avt_loss: {} intermediate labels for {} frames", intermediate.size(), t));
    }
    double steps = 0.0;
    for (std::size_t j = 0; j < t; ++j) steps -= std::log(out.y_steps[j][static_cast<std::size_t>(intermediate[j])]);
    loss += aux.mu_intermediate * steps / static_cast<double>(t);
  }
  if (aux.mu_future_feature != 0.0 && t > 1) {
    const auto n = static_cast<Eigen::Index>(t) - 1;
    const double sq = (out.future.topRows(n) - out.z.bottomRows(n)).squaredNorm();
    loss += aux.mu_future_feature * sq / static_cast<double>(n);
  }
  return loss;
}

double distill_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                    const DistillConfig& cfg) {
  if (student_logits.size() != teacher_logits.size()) {
    throw std::invalid_argument(fmt::format("distill_loss: student has {} logits, teacher {}", student_logits.size(),
                                            teacher_logits.size()));
  }
  const auto s = selected_classes(teacher_logits, cfg);
  std::vector<double> ts;
  std::vector<double> ss;
  for (int i : s) {
    ts.push_back(teacher_logits[static_cast<std::size_t>(i)]);
    ss.push_back(student_logits[static_cast<std::size_t>(i)]);
  }
  return nn::kl_divergence(nn::softmax_temp(ts, cfg.gamma), nn::softmax_temp(ss, cfg.gamma));
}

Var distill_loss(const Var& student_logits, std::span<const double> teacher_logits, const DistillConfig& cfg) {
  if (student_logits.rows() != 1 || static_cast<std::size_t>(student_logits.cols()) != teacher_logits.size()) {
    throw std::invalid_argument(fmt::format("distill_loss: student has {} logits, teacher {}", student_logits.cols(),
                                            teacher_logits.size()));
  }
  const auto s = selected_classes(teacher_logits, cfg);
  std::vector<double> ts;
  for (int i : s) ts.push_back(teacher_logits[static_cast<std::size_t>(i)]);
  const nn::ProbDist p = nn::softmax_temp(ts, cfg.gamma);
  const Matrix pm = Eigen::Map<const Matrix>(p.values().data(), 1, static_cast<Eigen::Index>(p.size()));
  return nn::kl_divergence(Var::constant(pm), student_restricted_log_probs(student_logits, s, cfg.gamma));
}

Var distill_loss(const Var& student_logits, const DistillTarget& target, const DistillConfig& cfg) {
  if (student_logits.cols() != target.tempered.cols() ||
      static_cast<std::size_t>(target.tempered.cols()) != target.selection_scores.size()) {
    throw std::invalid_argument("distill_loss: student and target class counts differ");
  }
  const auto s = selected_classes(target.selection_scores, cfg);
  const Var p = nn::normalize_row(nn::select_cols(target.tempered, s));
  return nn::kl_divergence(p, student_restricted_log_probs(student_logits, s, cfg.gamma));
}

void TeacherSource::prepare(const corpus::Dataset& train, const vocab::Vocabulary& vocab) {
  if (teacher_->dims().actions != vocab.num_actions()) {
    throw std::invalid_argument(fmt::format("teacher has {} action classes, student vocabulary {}",
                                            teacher_->dims().actions, vocab.num_actions()));
  }
  logits_.clear();
  logits_.reserve(train.instances.size());
  const int ctx = teacher_->config().context_len;
  for (const auto& inst : train.instances) {
    logits_.push_back(teacher_->forward(vocab.encode_sequence(inst.segments, ctx)).action_logits);
  }
}

DistillTarget TeacherSource::target(std::size_t index, const Var&, double gamma) const {
  const auto& l = logits_.at(index);
  const nn::ProbDist p = nn::softmax_temp(l, gamma);
  DistillTarget t;
  t.tempered = Var::constant(Eigen::Map<const Matrix>(p.values().data(), 1, static_cast<Eigen::Index>(p.size())));
  t.selection_scores = l;
  return t;
}

std::vector<int> intermediate_labels(const corpus::Instance& inst, const vocab::Vocabulary& vocab,
                                     IntermediateTarget which) {
  const auto steps =
      which == IntermediateTarget::kNext ? corpus::frame_next_labels(inst) : corpus::frame_segment_labels(inst);
  std::vector<int> ids;
  ids.reserve(steps.size());
  for (const auto& s : steps) ids.push_back(vocab.action_id(s));
  return ids;
}

StudentModel train_student(const corpus::Dataset& train, const vocab::Vocabulary& vocab, const StudentConfig& cfg,
                           const DistillConfig& distill, DistillSource* source, TrainLog* log) {
  if (train.instances.empty()) throw std::invalid_argument("train_student: empty training set");
  if (cfg.batch_size < 1) throw std::invalid_argument("train_student: batch_size must be >= 1");
  if (distill.lambda_s < 0.0) throw std::invalid_argument("train_student: lambda_s must be >= 0");
  StudentModel model(cfg, {static_cast<int>(train.feature_dim()), vocab.num_actions()});

  const bool distilling = source != nullptr && distill.lambda_s > 0.0;
  std::vector<nn::Param> params = model.params().entries();
  if (distilling) {
    if (source->num_classes() != vocab.num_actions()) {
      throw std::invalid_argument(fmt::format("distillation source has {} classes, student vocabulary {}",
                                              source->num_classes(), vocab.num_actions()));
    }
    if (distill.top_k && (*distill.top_k < 1 || *distill.top_k > vocab.num_actions())) {
      throw std::invalid_argument(fmt::format("top_k={} outside [1, {}]; use \"ALL\" for every class", *distill.top_k,
                                              vocab.num_actions()));
    }
    source->prepare(train, vocab);
    if (auto* extra = source->trainable()) params.insert(params.end(), extra->begin(), extra->end());
  }
  const double distill_weight = distill.lambda_s * (distill.gamma_sq_scale ? distill.gamma * distill.gamma : 1.0);

  std::vector<std::vector<int>> inter;
  inter.reserve(train.instances.size());
  for (const auto& inst : train.instances) inter.push_back(intermediate_labels(inst, vocab, cfg.intermediate_target));
  std::vector<int> targets;
  for (const auto& inst : train.instances) targets.push_back(vocab.action_id(inst.target));

  const AuxWeights aux{cfg.mu_intermediate, cfg.mu_future_feature};
  nn::AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  nn::AdamW opt(oc);
  nn::Rng rng(cfg.seed ^ 0x73747564ULL);
  std::vector<std::size_t> order(train.instances.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& p : params) p.var.zero_grad();
      Var total;
      double distill_sum = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        const StudentGraph g = model.forward_graph(train.instances[idx].frames);
        Var l = avt_loss(g, targets[idx], inter[idx], aux);
        if (distilling) {
          const Var f_s = nn::slice_rows(g.f_v, g.f_v.rows() - 1, 1);
          const Var d = distill_loss(g.final_logits, source->target(idx, f_s, distill.gamma), distill);
          distill_sum += d.item();
          l = nn::add(l, nn::scale(d, distill_weight));
        }
        total = total.defined() ? nn::add(total, l) : l;
      }
      const double n = static_cast<double>(stop - start);
      total = nn::scale(total, 1.0 / n);
      nn::backward(total);
      opt.step(params);
      epoch_sum += total.item() * n;
      if (log) {
        log->step_loss.push_back(total.item());
        log->step_distill.push_back(distill_sum / n);
      }
    }
    const double epoch_loss = epoch_sum / static_cast<double>(order.size());
    if (log) log->epoch_loss.push_back(epoch_loss);
    spdlog::debug("student epoch {}: loss {:.6f}", epoch, epoch_loss);
  }
  return model;
}

}  // namespace kd::student
