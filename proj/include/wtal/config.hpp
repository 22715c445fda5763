#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wtal {

// Training/inference hyperparameters. Defaults are the shipped desk-scale
// operating point; every field is exposed in the experiment config file and
// overridable from the command line with --set key=value.
struct Config {
  std::uint64_t seed = 20240817;

  int num_classes = 12;
  int feature_dim = 24;  // VLP stream width D; the CBP stream is 2D
  int t_sample = 96;
  int mil_k_denom = 8;  // top-k pool size k = max(1, ceil(T / mil_k_denom))

  int d_model = 64;
  int tf_layers = 2;
  int tf_heads = 4;
  int prompt_count = 16;  // prefix count; the suffix has the same count

  double lr = 3e-4;
  int warmup_iters = 300;
  int cycles = 3;
  int step_iters = 200;

  double delta_h = 0.3;
  double delta_l = 0.1;
  double theta_cls = 0.85;
  double theta_loc = 0.45;
  double lambda = 0.05;
  double tau = 0.07;

  // "sigmoid": independent per-class video scores + binary cross-entropy;
  // "softmax": scores via softmax over classes + cross-entropy. The sigmoid
  // form penalizes an absent class directly, which is what keeps background
  // frames suppressed across videos; softmax only rebalances classes against
  // each other.
  std::string video_score_fn = "sigmoid";
  // Per-frame squashing of similarity logits: per-entry "sigmoid" or
  // "softmax" across classes. A softmax row can never drop every class below
  // a small threshold at once (the row sums to one), so per-entry sigmoid is
  // the form under which a frame can be confidently background.
  std::string cas_squash = "sigmoid";
  bool f_step_cls = true;  // include the video-level loss during F steps

  std::string nms_mode = "linear";  // or "gaussian"
  double nms_iou = 0.3;
  double nms_floor = 1e-3;
  double nms_sigma = 0.5;  // gaussian mode only
};

// Full experiment description: Config plus dataset/output locations and the
// training-strategy selector.
struct ExperimentConfig : Config {
  std::string data_dir;
  std::string out_dir;
  // warmup_only | only_b | only_f | alternating | fuse_avg | fuse_weight
  std::string baseline = "alternating";
  // CAS used by evaluation: cbp | vlp | avg | weight
  std::string eval_cas = "cbp";
  double fuse_weight = 0.5;  // weight on the CBP grid in "weight" fusion
};

// Parses a config JSON document. Unknown keys and invalid values raise
// ParameterError; absent keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Applies one "key=value" override; the key must be a known config field.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Fixed-order serialization; parse(canonical_text(c)) == c and
// canonical_text is a fixed point. The config hash is FNV-1a over this text.
std::string canonical_text(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

}  // namespace wtal
