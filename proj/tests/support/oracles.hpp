#pragma once

#include <set>
#include <utility>
#include <vector>

// Straight-line reference implementations used to cross-check the library.
// Nothing here calls into kd::; each formula is evaluated term by term.
namespace kd::oracle {

std::vector<double> softmax(const std::vector<double>& logits, double gamma);
double kl(const std::vector<double>& p, const std::vector<double>& q);
double weighted_ce(const std::vector<double>& logits, int target, const std::vector<double>& weights);

// Top-k by full sort on (value desc, index asc), re-softmax both sides over
// the selected logits, KL(teacher || student).
double distill(const std::vector<double>& teacher_logits, const std::vector<double>& student_logits, int k,
               double gamma);

// Scalar AdamW run for grads.size() steps from theta0.
double adamw_scalar(double theta0, const std::vector<double>& grads, double lr, double wd, double beta1 = 0.9,
                    double beta2 = 0.999, double eps = 1e-8);

// CE(final) + mu_int * mean_j CE(step j) + mu_feat * mean_{j<t-1} ||future_j - z_{j+1}||^2
// from raw per-step logits and feature rows.
double avt(const std::vector<std::vector<double>>& step_logits, int target, const std::vector<int>& intermediate,
           const std::vector<std::vector<double>>& future, const std::vector<std::vector<double>>& z, double mu_int,
           double mu_feat);

// Per head: softmax_i <k_ih, q_h>; alpha = mean over heads. keys[h][i] and
// queries[h] are already-projected vectors.
std::vector<double> ensemble_alpha(const std::vector<std::vector<std::vector<double>>>& keys,
                                   const std::vector<std::vector<double>>& queries);

// Prediction as (ranked class ids, target).
struct Pred {
  std::vector<int> ranked;
  int target = 0;
};

double acc1(const std::vector<Pred>& preds);
// Enumerates every class id in [0, n_classes) and averages recall over the
// ones that occur as a target and pass the filter.
double mean_recall(const std::vector<Pred>& preds, int k, int n_classes, const std::set<int>* only = nullptr);

}  // namespace kd::oracle
