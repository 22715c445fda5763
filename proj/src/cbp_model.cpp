#include "wtal/cbp_model.hpp"

#include <cmath>

#include "wtal/errors.hpp"

namespace wtal {

namespace {
constexpr int kBiasWindow = 65;  // clipped relative offsets, +-32 frames
constexpr double kLogFloor = 1e-7;
// Detection-style prior on the head bias: an untrained model should call
// every frame background (sigmoid(-3) ~ 0.05), and only video-label
// pressure lifts frames above that.
constexpr double kHeadBiasPrior = -3.0;
}  // namespace

CbpModel::CbpModel(const Config& cfg, Rng rng)
    : input_width_(2 * cfg.feature_dim),
      num_classes_(cfg.num_classes),
      d_model_(cfg.d_model) {
  const double std_in = 1.0 / std::sqrt(static_cast<double>(input_width_));
  const double std_head = 1.0 / std::sqrt(static_cast<double>(d_model_));

  in_w_ = params_.add("cbp.in.w", {input_width_, d_model_});
  in_b_ = params_.add("cbp.in.b", {d_model_});
  for (auto& v : in_w_->data) v = rng.normal(0.0, std_in);

  encoder_ = model::register_encoder(params_, "cbp", d_model_, cfg.tf_layers,
                                     cfg.tf_heads, kBiasWindow, rng);

  ln_f_gamma_ = params_.add("cbp.ln_f.gamma", {d_model_});
  ln_f_beta_ = params_.add("cbp.ln_f.beta", {d_model_});
  for (auto& v : ln_f_gamma_->data) v = 1.0;

  head_w_ = params_.add("cbp.head.w", {d_model_, num_classes_});
  head_b_ = params_.add("cbp.head.b", {num_classes_});
  for (auto& v : head_w_->data) v = rng.normal(0.0, std_head);
  for (auto& v : head_b_->data) v = kHeadBiasPrior;
}

CbpModel::Forward CbpModel::forward(ad::Graph& g,
                                    const FeatureTensor& features) const {
  if (features.d != input_width_)
    throw DimensionError("cbp forward: feature width " +
                         std::to_string(features.d) + ", model expects " +
                         std::to_string(input_width_));
  auto x = ad::make_constant({features.t, features.d}, features.values);
  auto h = g.add_rowvec(g.matmul(x, in_w_), in_b_);
  h = model::encode(g, encoder_, h);
  auto emb = g.layer_norm_rows(h, ln_f_gamma_, ln_f_beta_);
  auto logits = g.add_rowvec(g.matmul(emb, head_w_), head_b_);
  return {g.sigmoid(logits), emb};
}

int mil_k(int t, int denom) {
  if (t < 1 || denom < 1)
    throw ParameterError("mil_k: T and denominator must be positive");
  return std::max(1, (t + denom - 1) / denom);
}

ad::TensorPtr mil_video_scores(ad::Graph& g, ad::TensorPtr cas, int k,
                               const std::string& video_score_fn) {
  auto pooled = g.topk_mean_cols(cas, k);  // length C
  if (video_score_fn == "sigmoid") return g.sigmoid(pooled);
  if (video_score_fn != "softmax")
    throw ParameterError("mil_video_scores: unknown squash '" +
                         video_score_fn + "'");
  const int c = pooled->cols();
  auto row = g.softmax_rows(g.reshape(pooled, {1, c}));
  return g.reshape(row, {c});
}

ad::TensorPtr loss_cls(ad::Graph& g, ad::TensorPtr video_scores,
                       const std::vector<int>& labels,
                       const std::string& video_score_fn) {
  const int c = video_scores->cols();
  if (static_cast<int>(labels.size()) != c)
    throw DimensionError("loss_cls: label vector does not match class count");
  std::vector<double> y(labels.begin(), labels.end());
  auto y_pos = ad::make_constant({c}, y);
  auto log_p = g.log(g.clamp(video_scores, kLogFloor, 1.0));
  auto pos_term = g.sum(g.mul(y_pos, log_p));
  if (video_score_fn == "softmax") return g.scale(pos_term, -1.0);

  // Per-class sigmoid scores also penalize confident false positives.
  std::vector<double> y_negv(c);
  for (int i = 0; i < c; ++i) y_negv[i] = 1.0 - y[i];
  auto y_neg = ad::make_constant({c}, y_negv);
  auto one_minus = g.add_scalar(g.scale(video_scores, -1.0), 1.0);
  auto log_q = g.log(g.clamp(one_minus, kLogFloor, 1.0));
  auto neg_term = g.sum(g.mul(y_neg, log_q));
  return g.scale(g.add(pos_term, neg_term), -1.0);
}

}  // namespace wtal
