#pragma once

#include <string>
#include <vector>

#include "wtal/rng.hpp"
#include "wtal/tensor.hpp"

namespace wtal::model {

// One pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
// The attention output projection and the second MLP matrix start at zero,
// so a freshly built encoder is exactly the identity map.
struct BlockHandles {
  ad::TensorPtr ln1_gamma, ln1_beta;
  ad::TensorPtr wq, wk, wv, wo;
  ad::TensorPtr rel_bias;  // heads x window, empty when window == 0
  ad::TensorPtr ln2_gamma, ln2_beta;
  ad::TensorPtr w1, b1, w2, b2;
};

struct EncoderHandles {
  int heads = 1;
  std::vector<BlockHandles> blocks;
};

// Registers all block parameters under `prefix` and initializes them.
// `bias_window` is the odd length of the relative position table per head
// (0 disables positional bias). The MLP hidden width is 2x `width`.
EncoderHandles register_encoder(ad::ParamSet& params, const std::string& prefix,
                                int width, int layers, int heads,
                                int bias_window, Rng& rng);

ad::TensorPtr encode(ad::Graph& g, const EncoderHandles& enc, ad::TensorPtr x);

}  // namespace wtal::model
