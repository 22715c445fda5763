#pragma once

#include <cstdint>
#include <string>

#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/model_common.hpp"
#include "wtal/rng.hpp"
#include "wtal/tensor.hpp"

namespace wtal {

// Prompt-tuned similarity branch: a frozen linear "text encoder" maps
// [prefix prompts; class embedding; suffix prompts] to a class feature,
// frames pass through a small trainable temporal transformer, and the CAS
// is a squashed scaled dot product between the two. Only the prompts and
// the temporal stack ever train; the text map and class embeddings are
// constants derived from the dataset manifest.
class VlpModel {
 public:
  VlpModel(const Config& cfg, const Manifest& manifest, Rng rng);

  ad::TensorPtr text_features(ad::Graph& g) const;              // C x D rows, unit norm
  ad::TensorPtr video_features(ad::Graph& g,
                               const FeatureTensor& features) const;  // T x D, unit norm

  struct Forward {
    ad::TensorPtr cas;         // T x C, entries in [0,1]
    ad::TensorPtr embeddings;  // T x D (the temporal output rows)
  };
  Forward forward(ad::Graph& g, const FeatureTensor& features) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  // Serialized frozen weights; byte-stable across the model's lifetime.
  std::string frozen_bytes() const;
  std::uint64_t frozen_hash() const;

  int feature_dim() const { return d_; }
  int num_classes() const { return c_; }

 private:
  int c_;
  int d_;
  int prompt_count_;
  double tau_;
  std::string cas_squash_;
  ad::ParamSet params_;
  ad::TensorPtr prefix_, suffix_;       // trainable prompt banks
  model::EncoderHandles encoder_;       // trainable temporal stack
  ad::TensorPtr w_txt_;                 // frozen (2n_p+1)*D x D map
  ad::TensorPtr class_embed_;           // frozen C x D rows
};

}  // namespace wtal
