#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/corpus/types.hpp"
#include "kd/nn/checkpoint.hpp"
#include "kd/nn/functional.hpp"
#include "kd/nn/param_store.hpp"
#include "kd/nn/transformer.hpp"
#include "kd/teacher/teacher.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace kd::student {

// Which segment label supervises the per-step predictions.
enum class IntermediateTarget { kCurrent, kNext };

struct StudentConfig {
  int hidden = 64;
  int heads = 4;
  int layers = 2;
  int ff_mult = 4;
  int max_frames = 64;

  double mu_intermediate = 1.0;
  double mu_future_feature = 1.0;
  IntermediateTarget intermediate_target = IntermediateTarget::kCurrent;

  int epochs = 8;
  double lr = 1e-5;
  double weight_decay = 1e-7;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const StudentConfig& cfg);
void from_json(const nlohmann::json& j, StudentConfig& cfg);

struct DistillConfig {
  double lambda_s = 0.0;
  double gamma = 2.0;
  std::optional<int> top_k = 50;  // nullopt = all classes
  bool gamma_sq_scale = false;
};

void to_json(nlohmann::json& j, const DistillConfig& cfg);
void from_json(const nlohmann::json& j, DistillConfig& cfg);

struct StudentDims {
  int feature_dim = 0;
  int actions = 0;

  bool operator==(const StudentDims&) const = default;
};

struct StudentGraph {
  nn::Var z;             // t x h backbone features
  nn::Var f_v;           // t x h decoder features
  nn::Var step_logits;   // t x C
  nn::Var final_logits;  // 1 x C, last row of step_logits
  nn::Var future;        // t x h predicted next-frame features
};

struct StudentOutput {
  nn::Matrix z;
  nn::Matrix f_v;
  nn::Matrix future;
  std::vector<nn::ProbDist> y_steps;
  nn::ProbDist y_final;
  std::vector<double> final_logits;
};

// Frame-only anticipation model: a shared per-frame MLP backbone, learned
// frame positions, a causal transformer decoder, a classifier applied at
// every step, and an affine future-feature head.
class StudentModel {
 public:
  StudentModel(StudentConfig cfg, StudentDims dims);
  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;
  StudentModel(StudentModel&&) = default;
  StudentModel& operator=(StudentModel&&) = default;

  [[nodiscard]] StudentGraph forward_graph(const nn::Matrix& frames) const;
  // Inference takes frames only.
  [[nodiscard]] StudentOutput predict(const nn::Matrix& frames) const;

  [[nodiscard]] const StudentConfig& config() const { return cfg_; }
  [[nodiscard]] const StudentDims& dims() const { return dims_; }
  [[nodiscard]] nn::ParamStore& params() { return store_; }
  [[nodiscard]] const nn::ParamStore& params() const { return store_; }

  [[nodiscard]] nn::Checkpoint to_checkpoint() const;
  static StudentModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  StudentConfig cfg_;
  StudentDims dims_;
  nn::ParamStore store_;
  nn::Var bb1_w_, bb1_b_, bb2_w_, bb2_b_;
  nn::Var position_;
  nn::TransformerStack decoder_;
  nn::Var cls_w_, cls_b_;
  nn::Var fut_w_, fut_b_;
};

struct AuxWeights {
  double mu_intermediate = 1.0;
  double mu_future_feature = 1.0;
};

// CE(final, target) + mu_int * mean_j CE(step j, intermediate[j])
//   + mu_feat * mean_{j<t} ||future[j] - stopgrad(z[j+1])||^2
// `intermediate` may be empty only when mu_int == 0. A non-null
// `frozen_next` ((t-1) x h) replaces stopgrad(z[1:]), which lets finite
// differences see the same constant target as the analytic gradient.
nn::Var avt_loss(const StudentGraph& graph, int target, std::span<const int> intermediate, const AuxWeights& aux,
                 const nn::Matrix* frozen_next = nullptr);
double avt_loss(const StudentOutput& out, int target, std::span<const int> intermediate, const AuxWeights& aux);

// KL(softmax(t_S / gamma) || softmax(s_S / gamma)) over the top-k teacher
// logits S. Gradient reaches the student logits only.
double distill_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                    const DistillConfig& cfg);
nn::Var distill_loss(const nn::Var& student_logits, std::span<const double> teacher_logits,
                     const DistillConfig& cfg);

// A distillation target in general form: a tempered distribution over the
// classes (constant for a single teacher, differentiable for a learned
// ensemble) plus the scores used to choose the top-k class set.
struct DistillTarget {
  nn::Var tempered;                     // 1 x C
  std::vector<double> selection_scores;  // C
};

// restrict `tempered` to the top-k of `selection_scores`, renormalise, and
// take KL against the student's restricted tempered softmax.
nn::Var distill_loss(const nn::Var& student_logits, const DistillTarget& target, const DistillConfig& cfg);

// Supplies per-instance distillation targets during student training.
class DistillSource {
 public:
  virtual ~DistillSource() = default;
  [[nodiscard]] virtual int num_classes() const = 0;
  // Called once with the training split before the first step.
  virtual void prepare(const corpus::Dataset& train, const vocab::Vocabulary& vocab) = 0;
  // `f_s` is the student's last-step decoder feature (1 x h).
  [[nodiscard]] virtual DistillTarget target(std::size_t index, const nn::Var& f_s, double gamma) const = 0;
  // Extra trainable parameters updated jointly with the student.
  virtual std::vector<nn::Param>* trainable() { return nullptr; }
};

// A single frozen teacher evaluated once per training instance on its
// observed segments.
class TeacherSource : public DistillSource {
 public:
  explicit TeacherSource(const teacher::TeacherModel& teacher) : teacher_(&teacher) {}
  [[nodiscard]] int num_classes() const override { return teacher_->dims().actions; }
  void prepare(const corpus::Dataset& train, const vocab::Vocabulary& vocab) override;
  [[nodiscard]] DistillTarget target(std::size_t index, const nn::Var& f_s, double gamma) const override;

 private:
  const teacher::TeacherModel* teacher_;
  std::vector<std::vector<double>> logits_;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> step_distill;
  std::vector<double> epoch_loss;
};

// Per-frame intermediate labels (action ids) for an instance.
std::vector<int> intermediate_labels(const corpus::Instance& inst, const vocab::Vocabulary& vocab,
                                     IntermediateTarget which);

// Minimises avt_loss + lambda_s * distill_loss per minibatch with AdamW.
// Without a source or with lambda_s == 0 the distillation term is not
// computed at all.
StudentModel train_student(const corpus::Dataset& train, const vocab::Vocabulary& vocab, const StudentConfig& cfg,
                           const DistillConfig& distill, DistillSource* source, TrainLog* log = nullptr);

}  // namespace kd::student
