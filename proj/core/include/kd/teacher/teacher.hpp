#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/corpus/types.hpp"
#include "kd/nn/checkpoint.hpp"
#include "kd/nn/functional.hpp"
#include "kd/nn/param_store.hpp"
#include "kd/nn/transformer.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace kd::teacher {

struct TeacherConfig {
  int hidden = 64;
  int heads = 4;
  int layers = 2;
  int ff_mult = 4;
  int context_len = 5;

  int epochs = 4;
  double lr = 1e-5;
  double weight_decay = 1e-7;
  int batch_size = 16;
  double lambda_action = 1.0;
  double lambda_verb = 1.0;
  double lambda_object = 1.0;
  bool weighted_ce = false;

  double mask_rate = 0.15;
  int pretrain_steps = 200;
  int pretrain_batch = 16;

  std::uint64_t seed = 0;

  [[nodiscard]] int sequence_length() const { return 1 + 2 * context_len; }
};

void to_json(nlohmann::json& j, const TeacherConfig& cfg);
void from_json(const nlohmann::json& j, TeacherConfig& cfg);

struct TeacherDims {
  int tokens = 0;
  int actions = 0;
  int verbs = 0;
  int objects = 0;

  static TeacherDims from(const vocab::Vocabulary& v) {
    return {v.num_tokens(), v.num_actions(), v.num_verbs(), v.num_objects()};
  }
  bool operator==(const TeacherDims&) const = default;
};

// Differentiable forward pass.
struct TeacherGraph {
  nn::Var f_txt;          // 1 x hidden, encoder output at the CLS position
  nn::Var action_logits;  // 1 x C
  nn::Var verb_logits;    // 1 x C_v
  nn::Var object_logits;  // 1 x C_o
};

struct TeacherOutput {
  nn::RowVector f_txt;
  nn::ProbDist y_action;
  nn::ProbDist y_verb;
  nn::ProbDist y_object;
  std::vector<double> action_logits;
};

// Text-modality anticipation model: token + position embeddings, a
// transformer encoder with PAD keys masked out, and linear action / verb /
// object heads on the CLS feature. An MLM head over the token space is used
// for pretraining only.
class TeacherModel {
 public:
  TeacherModel(TeacherConfig cfg, TeacherDims dims);
  TeacherModel(const TeacherModel&) = delete;
  TeacherModel& operator=(const TeacherModel&) = delete;
  TeacherModel(TeacherModel&&) = default;
  TeacherModel& operator=(TeacherModel&&) = default;

  [[nodiscard]] TeacherGraph forward_graph(std::span<const int> tokens) const;
  [[nodiscard]] TeacherOutput forward(std::span<const int> tokens) const;
  // sequence_length x tokens logits for every position.
  [[nodiscard]] nn::Var mlm_logits(std::span<const int> tokens) const;

  [[nodiscard]] const TeacherConfig& config() const { return cfg_; }
  [[nodiscard]] const TeacherDims& dims() const { return dims_; }
  [[nodiscard]] nn::ParamStore& params() { return store_; }
  [[nodiscard]] const nn::ParamStore& params() const { return store_; }

  [[nodiscard]] nn::Checkpoint to_checkpoint() const;
  static TeacherModel from_checkpoint(const nn::Checkpoint& ckpt);

  // Embedding + encoder tensors only (no task or MLM heads).
  [[nodiscard]] nn::Checkpoint encoder_checkpoint() const;
  // Throws std::invalid_argument listing every differing dimension.
  void load_encoder(const nn::Checkpoint& ckpt);

 private:
  [[nodiscard]] nn::Var encode(std::span<const int> tokens, int* cls_position) const;

  TeacherConfig cfg_;
  TeacherDims dims_;
  nn::ParamStore store_;
  nn::Var token_embedding_;
  nn::Var position_embedding_;
  nn::TransformerStack encoder_;
  nn::Var action_w_, action_b_, verb_w_, verb_b_, object_w_, object_b_;
  nn::Var mlm_w_, mlm_b_;
};

struct LossLambdas {
  double action = 1.0;
  double verb = 1.0;
  double object = 1.0;
};

// lambda * CE_w(action) + lambda_o * CE(object) + lambda_v * CE(verb).
// Class weights apply to the action term only; an empty span means unweighted.
nn::Var teacher_loss(const TeacherGraph& graph, const vocab::ActionLabel& target, const LossLambdas& lambdas,
                     std::span<const double> action_weights);
double teacher_loss(const TeacherOutput& out, const vocab::ActionLabel& target, const LossLambdas& lambdas,
                    std::span<const double> action_weights);

struct TeacherExample {
  std::vector<int> tokens;
  vocab::ActionLabel target;
};

std::vector<TeacherExample> make_examples(const corpus::Dataset& ds, const vocab::Vocabulary& vocab,
                                          int context_len);

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
  std::size_t skipped = 0;
};

struct PretrainResult {
  nn::Checkpoint checkpoint;  // embeddings + encoder
  TrainLog log;
};

// Masked-label-model pretraining on action sequences. Each step samples
// `pretrain_batch` windows; in each window max(1, round(mask_rate * n))
// of the n maskable (verb/object) tokens are chosen, replaced 80/10/10 by
// MASK / a random label token / themselves, and predicted. Steps whose
// labels fall outside the vocabulary are dropped from the corpus first.
PretrainResult pretrain_mlm(const std::vector<corpus::ActionSeq>& corpus, const vocab::Vocabulary& vocab,
                            const TeacherConfig& cfg);

// Supervised fine-tuning with AdamW over cfg.epochs. With `init`, the
// embeddings and encoder come from the checkpoint and heads start fresh.
TeacherModel finetune_teacher(const corpus::Dataset& train, const vocab::Vocabulary& vocab,
                              const TeacherConfig& cfg, const nn::Checkpoint* init = nullptr,
                              TrainLog* log = nullptr);

struct ScoredAction {
  vocab::ActionLabel label;
  double prob = 0.0;
};

// k classes by descending probability, ties to the lowest id.
std::vector<ScoredAction> teacher_predict_topk(const TeacherModel& model, const vocab::Vocabulary& vocab,
                                               std::span<const int> tokens, int k);

}  // namespace kd::teacher
