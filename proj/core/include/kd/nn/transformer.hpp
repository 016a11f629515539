#pragma once

#include <string>
#include <vector>

#include "kd/nn/param_store.hpp"

namespace kd::nn {

struct TransformerShape {
  int hidden = 64;
  int heads = 4;
  int layers = 2;
  int ff_mult = 4;
};

// Pre-LayerNorm transformer stack:
//   x <- x + MHA(LN(x), mask);  x <- x + FF(LN(x))
// followed by a final LayerNorm. Used with a key-padding mask by the text
// encoder and with a causal mask by the frame decoder.
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamStore& store, const std::string& prefix, TransformerShape shape, Rng& rng);

  [[nodiscard]] Var forward(const Var& x, const Matrix* additive_mask) const;
  [[nodiscard]] const TransformerShape& shape() const { return shape_; }

 private:
  struct Layer {
    Var ln1_gain, ln1_bias;
    Var wq, bq, wk, wv, bv, wo, bo;  // no key bias: it cancels in the softmax
    Var ln2_gain, ln2_bias;
    Var ff1_w, ff1_b, ff2_w, ff2_b;
  };

  [[nodiscard]] Var self_attention(const Layer& layer, const Var& x, const Matrix* mask) const;

  TransformerShape shape_;
  std::vector<Layer> layers_;
  Var final_gain_, final_bias_;
};

}  // namespace kd::nn
