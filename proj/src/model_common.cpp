#include "wtal/model_common.hpp"

#include <cmath>

#include "wtal/errors.hpp"

namespace wtal::model {

namespace {

void init_gaussian(ad::TensorPtr t, Rng& rng, double std) {
  for (auto& v : t->data) v = rng.normal(0.0, std);
}

void init_const(ad::TensorPtr t, double value) {
  for (auto& v : t->data) v = value;
}

}  // namespace

EncoderHandles register_encoder(ad::ParamSet& params, const std::string& prefix,
                                int width, int layers, int heads,
                                int bias_window, Rng& rng) {
  if (width < 1 || layers < 1 || heads < 1 || width % heads != 0)
    throw ParameterError("encoder: width must be a positive multiple of heads");
  if (bias_window < 0 || (bias_window != 0 && bias_window % 2 == 0))
    throw ParameterError("encoder: bias window must be odd or zero");

  const double std = 1.0 / std::sqrt(static_cast<double>(width));
  const int hidden = 2 * width;
  EncoderHandles enc;
  enc.heads = heads;
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".blocks." + std::to_string(l);
    BlockHandles b;
    b.ln1_gamma = params.add(p + ".ln1.gamma", {width});
    b.ln1_beta = params.add(p + ".ln1.beta", {width});
    b.wq = params.add(p + ".attn.wq", {width, width});
    b.wk = params.add(p + ".attn.wk", {width, width});
    b.wv = params.add(p + ".attn.wv", {width, width});
    b.wo = params.add(p + ".attn.wo", {width, width});
    if (bias_window > 0)
      b.rel_bias = params.add(p + ".attn.rel_bias", {heads, bias_window});
    b.ln2_gamma = params.add(p + ".ln2.gamma", {width});
    b.ln2_beta = params.add(p + ".ln2.beta", {width});
    b.w1 = params.add(p + ".mlp.w1", {width, hidden});
    b.b1 = params.add(p + ".mlp.b1", {hidden});
    b.w2 = params.add(p + ".mlp.w2", {hidden, width});
    b.b2 = params.add(p + ".mlp.b2", {width});

    init_const(b.ln1_gamma, 1.0);
    init_const(b.ln2_gamma, 1.0);
    init_gaussian(b.wq, rng, std);
    init_gaussian(b.wk, rng, std);
    init_gaussian(b.wv, rng, std);
    init_gaussian(b.w1, rng, std);
    // wo, w2, biases and the relative position table stay zero: the block
    // starts as the identity and positions start unbiased.
    enc.blocks.push_back(std::move(b));
  }
  return enc;
}

ad::TensorPtr encode(ad::Graph& g, const EncoderHandles& enc, ad::TensorPtr x) {
  for (const auto& b : enc.blocks) {
    auto h = g.layer_norm_rows(x, b.ln1_gamma, b.ln1_beta);
    auto q = g.matmul(h, b.wq);
    auto k = g.matmul(h, b.wk);
    auto v = g.matmul(h, b.wv);
    auto attn = g.scaled_dot_attention(q, k, v, enc.heads, b.rel_bias);
    x = g.add(x, g.matmul(attn, b.wo));

    auto m = g.layer_norm_rows(x, b.ln2_gamma, b.ln2_beta);
    m = g.gelu(g.add_rowvec(g.matmul(m, b.w1), b.b1));
    m = g.add_rowvec(g.matmul(m, b.w2), b.b2);
    x = g.add(x, m);
  }
  return x;
}

}  // namespace wtal::model
