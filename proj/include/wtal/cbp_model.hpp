#pragma once

#include <string>
#include <vector>

#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/model_common.hpp"
#include "wtal/rng.hpp"
#include "wtal/tensor.hpp"

namespace wtal {

// Trainable localization branch over the wide feature stream: input
// projection, a small transformer stack with relative position bias, and a
// per-frame sigmoid classification head.
class CbpModel {
 public:
  CbpModel(const Config& cfg, Rng rng);

  struct Forward {
    ad::TensorPtr cas;         // T x C, entries in [0,1]
    ad::TensorPtr embeddings;  // T x d_model, pre-head representation
  };
  Forward forward(ad::Graph& g, const FeatureTensor& features) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  int input_width() const { return input_width_; }
  int num_classes() const { return num_classes_; }

 private:
  int input_width_;
  int num_classes_;
  int d_model_;
  ad::ParamSet params_;
  ad::TensorPtr in_w_, in_b_;
  model::EncoderHandles encoder_;
  ad::TensorPtr ln_f_gamma_, ln_f_beta_;
  ad::TensorPtr head_w_, head_b_;
};

// Top-k temporal mean per class followed by the video-level squash from
// config (per-class sigmoid by default, softmax across classes otherwise).
// Returns a length-C tensor.
ad::TensorPtr mil_video_scores(ad::Graph& g, ad::TensorPtr cas, int k,
                               const std::string& video_score_fn);

// Video-level classification loss against multi-hot labels. The softmax
// scoring path sums -y_c log(score_c); the sigmoid path uses the full
// per-class binary cross entropy.
ad::TensorPtr loss_cls(ad::Graph& g, ad::TensorPtr video_scores,
                       const std::vector<int>& labels,
                       const std::string& video_score_fn);

int mil_k(int t, int denom);

}  // namespace wtal
