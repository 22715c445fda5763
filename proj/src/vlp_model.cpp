#include "wtal/vlp_model.hpp"

#include <cmath>

#include "wtal/binio.hpp"
#include "wtal/checkpoint.hpp"
#include "wtal/errors.hpp"

namespace wtal {

namespace {
constexpr int kBiasWindow = 65;
}

VlpModel::VlpModel(const Config& cfg, const Manifest& manifest, Rng rng)
    : c_(cfg.num_classes),
      d_(cfg.feature_dim),
      prompt_count_(cfg.prompt_count),
      tau_(cfg.tau),
      cas_squash_(cfg.cas_squash) {
  if (manifest.num_classes != c_ || manifest.feature_dim != d_)
    throw ParameterError(
        "vlp model: config and manifest disagree on classes or feature width");

  prefix_ = params_.add("vlp.prompts.prefix", {prompt_count_, d_});
  suffix_ = params_.add("vlp.prompts.suffix", {prompt_count_, d_});
  for (auto& v : prefix_->data) v = rng.normal(0.0, 0.01);
  for (auto& v : suffix_->data) v = rng.normal(0.0, 0.01);

  encoder_ = model::register_encoder(params_, "vlp.temporal", d_,
                                     cfg.tf_layers, cfg.tf_heads, kBiasWindow,
                                     rng);

  // Frozen text map: identity on the class-embedding slot, random rows on
  // the prompt slots. With near-zero prompts the class feature starts as
  // the class embedding itself, so the untrained branch is already aligned.
  const int slots = 2 * prompt_count_ + 1;
  const int flat = slots * d_;
  Rng text_rng = Rng(manifest.text_seed).split(7);
  const double std = 1.0 / std::sqrt(static_cast<double>(2 * prompt_count_ * d_));
  std::vector<double> w(static_cast<std::size_t>(flat) * d_, 0.0);
  for (int slot = 0; slot < slots; ++slot) {
    for (int i = 0; i < d_; ++i) {
      const std::size_t r = static_cast<std::size_t>(slot) * d_ + i;
      if (slot == prompt_count_) {
        w[r * d_ + i] = 1.0;
      } else {
        for (int j = 0; j < d_; ++j) w[r * d_ + j] = text_rng.normal(0.0, std);
      }
    }
  }
  w_txt_ = ad::make_constant({flat, d_}, w);
  w_txt_->name = "vlp.frozen.w_txt";

  std::vector<double> e(manifest.vlp_prototypes.begin(),
                        manifest.vlp_prototypes.begin() +
                            static_cast<std::size_t>(c_) * d_);
  class_embed_ = ad::make_constant({c_, d_}, e);
  class_embed_->name = "vlp.frozen.class_embed";
}

ad::TensorPtr VlpModel::text_features(ad::Graph& g) const {
  const int flat = (2 * prompt_count_ + 1) * d_;
  std::vector<ad::TensorPtr> rows;
  rows.reserve(c_);
  for (int c = 0; c < c_; ++c) {
    auto e_row = g.gather_rows(class_embed_, {c});
    auto stacked = g.concat_rows({prefix_, e_row, suffix_});
    rows.push_back(g.reshape(stacked, {1, flat}));
  }
  auto tokens = g.concat_rows(rows);
  return g.l2_normalize_rows(g.matmul(tokens, w_txt_));
}

ad::TensorPtr VlpModel::video_features(ad::Graph& g,
                                       const FeatureTensor& features) const {
  if (features.d != d_)
    throw DimensionError("vlp forward: feature width " +
                         std::to_string(features.d) + ", model expects " +
                         std::to_string(d_));
  auto x = ad::make_constant({features.t, features.d}, features.values);
  return g.l2_normalize_rows(model::encode(g, encoder_, x));
}

VlpModel::Forward VlpModel::forward(ad::Graph& g,
                                    const FeatureTensor& features) const {
  auto f_vid = video_features(g, features);
  auto f_txt = text_features(g);
  auto logits = g.scale(g.matmul(f_vid, g.transpose(f_txt)), 1.0 / tau_);
  auto cas = cas_squash_ == "sigmoid" ? g.sigmoid(logits)
                                      : g.softmax_rows(logits);
  return {cas, f_vid};
}

std::string VlpModel::frozen_bytes() const {
  return io::serialize_params({w_txt_, class_embed_});
}

std::uint64_t VlpModel::frozen_hash() const {
  return io::fnv1a64(frozen_bytes());
}

}  // namespace wtal
