#include "kd/ensemble/ensemble.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "kd/nn/ops.hpp"

namespace kd::ensemble {

using nn::Matrix;
using nn::Var;

Strategy parse_strategy(const std::string& name) {
  if (name == "cross_attention") return Strategy::kCrossAttention;
  if (name == "mean_pool") return Strategy::kMeanPool;
  if (name == "fixed_weights") return Strategy::kFixedWeights;
  throw std::invalid_argument(
      fmt::format("unknown ensemble strategy '{}' (expected cross_attention, mean_pool, fixed_weights)", name));
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kCrossAttention:
      return "cross_attention";
    case Strategy::kMeanPool:
      return "mean_pool";
    case Strategy::kFixedWeights:
      return "fixed_weights";
  }
  return "?";
}

void to_json(nlohmann::json& j, const EnsembleConfig& c) {
  j = nlohmann::json{{"ensemble_heads", c.heads},
                     {"attention_dim", c.attention_dim},
                     {"strategy", strategy_name(c.strategy)},
                     {"fixed_weights", c.fixed_weights},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EnsembleConfig& c) {
  if (j.contains("ensemble_heads")) j.at("ensemble_heads").get_to(c.heads);
  if (j.contains("attention_dim")) j.at("attention_dim").get_to(c.attention_dim);
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (j.contains("fixed_weights")) j.at("fixed_weights").get_to(c.fixed_weights);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

EnsembleParams::EnsembleParams(int heads, int teacher_dim, int student_dim, int attention_dim, nn::Rng& rng)
    : teacher_dim_(teacher_dim), student_dim_(student_dim) {
  if (heads < 1) throw std::invalid_argument(fmt::format("ensemble: heads must be >= 1, got {}", heads));
  if (teacher_dim < 1 || student_dim < 1 || attention_dim < 1) {
    throw std::invalid_argument("ensemble: dimensions must be positive");
  }
  for (int h = 0; h < heads; ++h) {
    wk_.push_back(store_.add(fmt::format("ensemble.head{}.wk", h), nn::init_weight(teacher_dim, attention_dim, rng)));
    bk_.push_back(store_.add(fmt::format("ensemble.head{}.bk", h), Matrix::Zero(1, attention_dim)));
    wq_.push_back(store_.add(fmt::format("ensemble.head{}.wq", h), nn::init_weight(student_dim, attention_dim, rng)));
    bq_.push_back(store_.add(fmt::format("ensemble.head{}.bq", h), Matrix::Zero(1, attention_dim)));
  }
}

namespace {

void check_dims(Eigen::Index f_s_rows, Eigen::Index f_s_cols, const Matrix& teacher_feats,
                const EnsembleParams& params) {
  if (f_s_rows != 1 || f_s_cols != params.student_dim()) {
    throw std::invalid_argument(fmt::format("ensemble_weights: student feature is {}x{}, expected 1x{}", f_s_rows,
                                            f_s_cols, params.student_dim()));
  }
  if (teacher_feats.rows() < 1 || teacher_feats.cols() != params.teacher_dim()) {
    throw std::invalid_argument(fmt::format("ensemble_weights: teacher features are {}x{}, expected n x {} with n >= 1",
                                            teacher_feats.rows(), teacher_feats.cols(), params.teacher_dim()));
  }
}

Matrix row_matrix(std::span<const double> v) {
  return Eigen::Map<const Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Var ensemble_weights(const Var& f_s, const Matrix& teacher_feats, const EnsembleParams& params) {
  check_dims(f_s.rows(), f_s.cols(), teacher_feats, params);
  const Var feats = Var::constant(teacher_feats);
  Var alpha;
  for (int h = 0; h < params.heads(); ++h) {
    const Var k = nn::linear(feats, params.wk(h), params.bk(h));
    const Var q = nn::linear(f_s, params.wq(h), params.bq(h));
    const Var a = nn::softmax_rows(nn::matmul_bt(q, k));
    alpha = alpha.defined() ? nn::add(alpha, a) : a;
  }
  return nn::scale(alpha, 1.0 / params.heads());
}

std::vector<double> ensemble_weights(const nn::RowVector& f_s, const Matrix& teacher_feats,
                                     const EnsembleParams& params) {
  check_dims(f_s.rows(), f_s.cols(), teacher_feats, params);
  const auto n = static_cast<std::size_t>(teacher_feats.rows());
  std::vector<double> alpha(n, 0.0);
  for (int h = 0; h < params.heads(); ++h) {
    const Matrix k = (teacher_feats * params.wk(h).value()).rowwise() + params.bk(h).value().row(0);
    const Matrix q = f_s * params.wq(h).value() + params.bq(h).value();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = k.row(static_cast<Eigen::Index>(i)).dot(q.row(0));
    const nn::ProbDist a = nn::softmax_temp(scores, 1.0);
    for (std::size_t i = 0; i < n; ++i) alpha[i] += a[i];
  }
  for (double& a : alpha) a /= params.heads();
  return alpha;
}

nn::ProbDist ensemble_predict(std::span<const double> alpha, const std::vector<nn::ProbDist>& dists) {
  if (alpha.size() != dists.size() || dists.empty()) {
    throw std::invalid_argument(
        fmt::format("ensemble_predict: {} weights for {} distributions", alpha.size(), dists.size()));
  }
  double total = 0.0;
  for (double a : alpha) {
    if (a < 0.0) throw std::invalid_argument(fmt::format("ensemble_predict: negative weight {}", a));
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("ensemble_predict: weights sum to {}, expected 1", total));
  }
  const std::size_t c = dists.front().size();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (dists[i].size() != c) throw std::invalid_argument("ensemble_predict: class counts differ");
    for (std::size_t k = 0; k < c; ++k) out[k] += alpha[i] * dists[i][k];
  }
  return nn::ProbDist(std::move(out));
}

Var ensemble_predict(const Var& alpha, const Matrix& dists) {
  if (alpha.rows() != 1 || alpha.cols() != dists.rows()) {
    throw std::invalid_argument("ensemble_predict: weight row does not match distribution count");
  }
  if ((alpha.value().array() < 0.0).any()) throw std::invalid_argument("ensemble_predict: negative weight");
  return nn::matmul(alpha, Var::constant(dists));
}

void check_teachers(const std::vector<const teacher::TeacherModel*>& teachers) {
  if (teachers.empty()) throw std::invalid_argument("ensemble: no teachers");
  const auto& first = *teachers.front();
  for (std::size_t i = 1; i < teachers.size(); ++i) {
    const auto& t = *teachers[i];
    if (!(t.dims() == first.dims())) {
      throw std::invalid_argument(fmt::format(
          "ensemble: teacher {} class space (actions {}, verbs {}, objects {}) differs from teacher 0 ({}, {}, {})", i,
          t.dims().actions, t.dims().verbs, t.dims().objects, first.dims().actions, first.dims().verbs,
          first.dims().objects));
    }
    if (t.config().hidden != first.config().hidden) {
      throw std::invalid_argument(fmt::format("ensemble: teacher {} feature width {} differs from teacher 0 ({})", i,
                                              t.config().hidden, first.config().hidden));
    }
  }
}

namespace {

EnsembleParams make_params(const std::vector<const teacher::TeacherModel*>& teachers, const EnsembleConfig& cfg,
                           int student_hidden) {
  check_teachers(teachers);
  nn::Rng rng(cfg.seed ^ 0x656e73ULL);
  return EnsembleParams(cfg.heads, teachers.front()->config().hidden, student_hidden, cfg.attention_dim, rng);
}

}  // namespace

EnsembleSource::EnsembleSource(std::vector<const teacher::TeacherModel*> teachers, EnsembleConfig cfg,
                               int student_hidden)
    : teachers_(std::move(teachers)), cfg_(std::move(cfg)), params_(make_params(teachers_, cfg_, student_hidden)) {
  if (cfg_.strategy == Strategy::kFixedWeights) {
    if (cfg_.fixed_weights.size() != teachers_.size()) {
      throw std::invalid_argument(fmt::format("ensemble: {} fixed weights for {} teachers", cfg_.fixed_weights.size(),
                                              teachers_.size()));
    }
    double total = 0.0;
    for (double w : cfg_.fixed_weights) {
      if (w < 0.0) throw std::invalid_argument("ensemble: negative fixed weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument(fmt::format("ensemble: fixed weights sum to {}, expected 1", total));
    }
  }
}

int EnsembleSource::num_classes() const { return teachers_.front()->dims().actions; }

void EnsembleSource::prepare(const corpus::Dataset& train, const vocab::Vocabulary& vocab) {
  if (num_classes() != vocab.num_actions()) {
    throw std::invalid_argument(
        fmt::format("teachers have {} action classes, student vocabulary {}", num_classes(), vocab.num_actions()));
  }
  const auto n = static_cast<Eigen::Index>(teachers_.size());
  features_.clear();
  logits_.clear();
  for (const auto& inst : train.instances) {
    Matrix feats(n, params_.teacher_dim());
    Matrix logits(n, num_classes());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = *teachers_[static_cast<std::size_t>(i)];
      const auto out = t.forward(vocab.encode_sequence(inst.segments, t.config().context_len));
      feats.row(i) = out.f_txt;
      logits.row(i) = row_matrix(out.action_logits);
    }
    features_.push_back(std::move(feats));
    logits_.push_back(std::move(logits));
  }
}

Var EnsembleSource::weights(std::size_t index, const Var& f_s) const {
  const auto n = static_cast<Eigen::Index>(teachers_.size());
  switch (cfg_.strategy) {
    case Strategy::kCrossAttention:
      return ensemble_weights(f_s, features_.at(index), params_);
    case Strategy::kMeanPool:
      return Var::constant(Matrix::Constant(1, n, 1.0 / static_cast<double>(n)));
    case Strategy::kFixedWeights:
      return Var::constant(row_matrix(cfg_.fixed_weights));
  }
  throw std::logic_error("unreachable");
}

student::DistillTarget EnsembleSource::target(std::size_t index, const Var& f_s, double gamma) const {
  const Matrix& logits = logits_.at(index);
  Matrix tempered(logits.rows(), logits.cols());
  Matrix plain(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const std::vector<double> row(logits.row(i).data(), logits.row(i).data() + logits.cols());
    tempered.row(i) = row_matrix(nn::softmax_temp(row, gamma).values());
    plain.row(i) = row_matrix(nn::softmax_temp(row, 1.0).values());
  }
  const Var alpha = weights(index, f_s);
  student::DistillTarget t;
  t.tempered = ensemble_predict(alpha, tempered);
  const Matrix mix = alpha.value() * plain;
  t.selection_scores.assign(mix.data(), mix.data() + mix.size());
  return t;
}

std::vector<nn::Param>* EnsembleSource::trainable() {
  return cfg_.strategy == Strategy::kCrossAttention ? &params_.store().entries() : nullptr;
}

EnsembleTrainResult train_ensemble_student(const corpus::Dataset& train, const vocab::Vocabulary& vocab,
                                           const student::StudentConfig& scfg, const student::DistillConfig& dcfg,
                                           const EnsembleConfig& ecfg,
                                           const std::vector<const teacher::TeacherModel*>& teachers,
                                           student::TrainLog* log) {
  EnsembleSource source(teachers, ecfg, scfg.hidden);
  auto model = student::train_student(train, vocab, scfg, dcfg, &source, log);
  nlohmann::json config = ecfg;
  config["kind"] = "ensemble";
  config["teachers"] = teachers.size();
  return {std::move(model), nn::capture(source.params().store(), config)};
}

}  // namespace kd::ensemble
