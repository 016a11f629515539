#pragma once

#include <span>
#include <vector>

#include "kd/nn/tensor.hpp"

// Differentiable operations over row-major matrices. Every op records a
// backward closure on the tape; all of them are covered by grad_check.
namespace kd::nn {

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_bt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
// Adds the 1 x n row `bias` to every row of x.
Var add_row(const Var& x, const Var& bias);
Var linear(const Var& x, const Var& weight, const Var& bias);

// tanh approximation; smooth everywhere, which keeps grad checks clean.
Var gelu(const Var& x);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var embedding(const Var& table, std::span<const int> ids);

Var softmax_rows(const Var& x);
// Adds a constant mask (0 or -inf entries) before the row softmax.
Var softmax_rows(const Var& x, const Matrix& additive_mask);
Var log_softmax_rows(const Var& x);

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count);
Var select_cols(const Var& x, std::span<const int> cols);
Var concat_cols(const std::vector<Var>& parts);

Var sum(const Var& x);
Var mean(const Var& x);
Var stop_gradient(const Var& x);

// Divides a row by its own sum.
Var normalize_row(const Var& x);

// softmax(q k^T / sqrt(d_k) + mask) v
Var attention(const Var& q, const Var& k, const Var& v, const Matrix* additive_mask);

// -w * log softmax(logits)[target] for a 1 x C logit row.
Var weighted_cross_entropy(const Var& logits, int target, double weight);
// sum_i p_i (ln p_i - log_q_i) with 0 ln 0 = 0; p and log_q are 1 x C rows.
Var kl_divergence(const Var& p, const Var& log_q);
// sum of squared differences
Var squared_error(const Var& pred, const Var& target);

// Additive causal mask: 0 on and below the diagonal, -inf above.
Matrix causal_mask(Eigen::Index n);
// Additive key-padding mask: -inf in every column whose key is masked.
Matrix key_padding_mask(const std::vector<bool>& key_is_pad);

}  // namespace kd::nn
