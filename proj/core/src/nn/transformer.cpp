#include "kd/nn/transformer.hpp"

#include <fmt/format.h>

#include <stdexcept>

#include "kd/nn/ops.hpp"

namespace kd::nn {

TransformerStack::TransformerStack(ParamStore& store, const std::string& prefix, TransformerShape shape,
                                   Rng& rng)
    : shape_(shape) {
  if (shape.hidden <= 0 || shape.heads <= 0 || shape.layers < 0 || shape.ff_mult <= 0) {
    throw std::invalid_argument("TransformerStack: non-positive shape");
  }
  if (shape.hidden % shape.heads != 0) {
    throw std::invalid_argument(
        fmt::format("TransformerStack: hidden {} not divisible by {} heads", shape.hidden, shape.heads));
  }
  const Eigen::Index h = shape.hidden;
  const Eigen::Index ff = static_cast<Eigen::Index>(shape.hidden) * shape.ff_mult;
  auto name = [&](int layer, const char* what) { return fmt::format("{}.layer{}.{}", prefix, layer, what); };
  for (int l = 0; l < shape.layers; ++l) {
    Layer layer;
    layer.ln1_gain = store.add(name(l, "ln1.gain"), Matrix::Ones(1, h));
    layer.ln1_bias = store.add(name(l, "ln1.bias"), Matrix::Zero(1, h));
    layer.wq = store.add(name(l, "attn.wq"), init_weight(h, h, rng));
    layer.bq = store.add(name(l, "attn.bq"), Matrix::Zero(1, h));
    layer.wk = store.add(name(l, "attn.wk"), init_weight(h, h, rng));
    layer.wv = store.add(name(l, "attn.wv"), init_weight(h, h, rng));
    layer.bv = store.add(name(l, "attn.bv"), Matrix::Zero(1, h));
    layer.wo = store.add(name(l, "attn.wo"), init_weight(h, h, rng));
    layer.bo = store.add(name(l, "attn.bo"), Matrix::Zero(1, h));
    layer.ln2_gain = store.add(name(l, "ln2.gain"), Matrix::Ones(1, h));
    layer.ln2_bias = store.add(name(l, "ln2.bias"), Matrix::Zero(1, h));
    layer.ff1_w = store.add(name(l, "ff1.w"), init_weight(h, ff, rng));
    layer.ff1_b = store.add(name(l, "ff1.b"), Matrix::Zero(1, ff));
    layer.ff2_w = store.add(name(l, "ff2.w"), init_weight(ff, h, rng));
    layer.ff2_b = store.add(name(l, "ff2.b"), Matrix::Zero(1, h));
    layers_.push_back(std::move(layer));
  }
  final_gain_ = store.add(prefix + ".final_ln.gain", Matrix::Ones(1, h));
  final_bias_ = store.add(prefix + ".final_ln.bias", Matrix::Zero(1, h));
}

Var TransformerStack::self_attention(const Layer& layer, const Var& x, const Matrix* mask) const {
  const Var q = linear(x, layer.wq, layer.bq);
  const Var k = matmul(x, layer.wk);
  const Var v = linear(x, layer.wv, layer.bv);
  const Eigen::Index head_dim = shape_.hidden / shape_.heads;
  if (shape_.heads == 1) {
    return linear(attention(q, k, v, mask), layer.wo, layer.bo);
  }
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(shape_.heads));
  for (int h = 0; h < shape_.heads; ++h) {
    const Eigen::Index off = h * head_dim;
    heads.push_back(attention(slice_cols(q, off, head_dim), slice_cols(k, off, head_dim),
                              slice_cols(v, off, head_dim), mask));
  }
  return linear(concat_cols(heads), layer.wo, layer.bo);
}

Var TransformerStack::forward(const Var& x, const Matrix* additive_mask) const {
  if (x.cols() != shape_.hidden) {
    throw std::invalid_argument(
        fmt::format("TransformerStack: input width {} != hidden {}", x.cols(), shape_.hidden));
  }
  Var h = x;
  for (const auto& layer : layers_) {
    h = add(h, self_attention(layer, layer_norm(h, layer.ln1_gain, layer.ln1_bias), additive_mask));
    const Var ff = linear(gelu(linear(layer_norm(h, layer.ln2_gain, layer.ln2_bias), layer.ff1_w, layer.ff1_b)),
                          layer.ff2_w, layer.ff2_b);
    h = add(h, ff);
  }
  return layer_norm(h, final_gain_, final_bias_);
}

}  // namespace kd::nn
