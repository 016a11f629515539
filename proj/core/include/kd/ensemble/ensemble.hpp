#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/nn/functional.hpp"
#include "kd/nn/param_store.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"

namespace kd::ensemble {

enum class Strategy { kCrossAttention, kMeanPool, kFixedWeights };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

struct EnsembleConfig {
  int heads = 1;
  int attention_dim = 32;
  Strategy strategy = Strategy::kCrossAttention;
  std::vector<double> fixed_weights;  // used by kFixedWeights; one per teacher
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const EnsembleConfig& cfg);
void from_json(const nlohmann::json& j, EnsembleConfig& cfg);

// Per-head key projections of teacher features and query projections of
// the student feature.
class EnsembleParams {
 public:
  EnsembleParams(int heads, int teacher_dim, int student_dim, int attention_dim, nn::Rng& rng);

  [[nodiscard]] int heads() const { return static_cast<int>(wk_.size()); }
  [[nodiscard]] int teacher_dim() const { return teacher_dim_; }
  [[nodiscard]] int student_dim() const { return student_dim_; }
  [[nodiscard]] const nn::Var& wk(int h) const { return wk_.at(static_cast<std::size_t>(h)); }
  [[nodiscard]] const nn::Var& bk(int h) const { return bk_.at(static_cast<std::size_t>(h)); }
  [[nodiscard]] const nn::Var& wq(int h) const { return wq_.at(static_cast<std::size_t>(h)); }
  [[nodiscard]] const nn::Var& bq(int h) const { return bq_.at(static_cast<std::size_t>(h)); }
  [[nodiscard]] nn::ParamStore& store() { return store_; }
  [[nodiscard]] const nn::ParamStore& store() const { return store_; }

 private:
  int teacher_dim_;
  int student_dim_;
  nn::ParamStore store_;
  std::vector<nn::Var> wk_, bk_, wq_, bq_;
};

// alpha_i = (1/H) sum_h softmax_i(<W_kh f_Ti + b_kh, W_qh f_S + b_qh>).
std::vector<double> ensemble_weights(const nn::RowVector& f_s, const nn::Matrix& teacher_feats,
                                     const EnsembleParams& params);
// Differentiable form; teacher features are constants. Returns 1 x n.
nn::Var ensemble_weights(const nn::Var& f_s, const nn::Matrix& teacher_feats, const EnsembleParams& params);

// sum_i alpha_i * dists[i]. Throws on negative alpha or sum(alpha) != 1.
nn::ProbDist ensemble_predict(std::span<const double> alpha, const std::vector<nn::ProbDist>& dists);
// alpha 1 x n, dists n x C -> 1 x C.
nn::Var ensemble_predict(const nn::Var& alpha, const nn::Matrix& dists);

// Distillation target aggregated over several frozen teachers. Each
// teacher's tempered distribution is mixed with weights from the chosen
// strategy; the top-k class set is chosen on the mixture of untempered
// distributions under the same weights.
class EnsembleSource : public student::DistillSource {
 public:
  EnsembleSource(std::vector<const teacher::TeacherModel*> teachers, EnsembleConfig cfg, int student_hidden);

  [[nodiscard]] int num_classes() const override;
  void prepare(const corpus::Dataset& train, const vocab::Vocabulary& vocab) override;
  [[nodiscard]] student::DistillTarget target(std::size_t index, const nn::Var& f_s, double gamma) const override;
  std::vector<nn::Param>* trainable() override;

  [[nodiscard]] nn::Var weights(std::size_t index, const nn::Var& f_s) const;
  [[nodiscard]] EnsembleParams& params() { return params_; }
  [[nodiscard]] const EnsembleConfig& config() const { return cfg_; }

 private:
  std::vector<const teacher::TeacherModel*> teachers_;
  EnsembleConfig cfg_;
  EnsembleParams params_;
  std::vector<nn::Matrix> features_;  // per instance: n x h_T
  std::vector<nn::Matrix> logits_;    // per instance: n x C
};

// Checks that all teachers share one class space and feature width.
void check_teachers(const std::vector<const teacher::TeacherModel*>& teachers);

struct EnsembleTrainResult {
  student::StudentModel student;
  nn::Checkpoint ensemble;
};

EnsembleTrainResult train_ensemble_student(const corpus::Dataset& train, const vocab::Vocabulary& vocab,
                                           const student::StudentConfig& scfg, const student::DistillConfig& dcfg,
                                           const EnsembleConfig& ecfg,
                                           const std::vector<const teacher::TeacherModel*>& teachers,
                                           student::TrainLog* log = nullptr);

}  // namespace kd::ensemble
