#include "wtal/config.hpp"

#include <json.hpp>

#include "wtal/binio.hpp"
#include "wtal/errors.hpp"

namespace wtal {

namespace {

using ordered_json = nlohmann::ordered_json;

// Field table driving parse, serialize, and --set uniformly.
template <typename F>
void for_each_field(ExperimentConfig& c, F&& f) {
  f("data_dir", c.data_dir);
  f("out_dir", c.out_dir);
  f("seed", c.seed);
  f("num_classes", c.num_classes);
  f("feature_dim", c.feature_dim);
  f("t_sample", c.t_sample);
  f("mil_k_denom", c.mil_k_denom);
  f("d_model", c.d_model);
  f("tf_layers", c.tf_layers);
  f("tf_heads", c.tf_heads);
  f("prompt_count", c.prompt_count);
  f("lr", c.lr);
  f("warmup_iters", c.warmup_iters);
  f("cycles", c.cycles);
  f("step_iters", c.step_iters);
  f("delta_h", c.delta_h);
  f("delta_l", c.delta_l);
  f("theta_cls", c.theta_cls);
  f("theta_loc", c.theta_loc);
  f("lambda", c.lambda);
  f("tau", c.tau);
  f("video_score_fn", c.video_score_fn);
  f("cas_squash", c.cas_squash);
  f("f_step_cls", c.f_step_cls);
  f("baseline", c.baseline);
  f("eval_cas", c.eval_cas);
  f("fuse_weight", c.fuse_weight);
  f("nms_mode", c.nms_mode);
  f("nms_iou", c.nms_iou);
  f("nms_floor", c.nms_floor);
  f("nms_sigma", c.nms_sigma);
}

template <typename T>
void assign_field(const ordered_json& v, const std::string& key, T& dst) {
  try {
    dst = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParameterError("config field '" + key + "' has the wrong type");
  }
}

ExperimentConfig from_json(const ordered_json& j) {
  if (!j.is_object()) throw ParameterError("config root must be an object");
  ExperimentConfig cfg;
  std::vector<std::string> known;
  for_each_field(cfg, [&](const char* key, auto& field) {
    known.push_back(key);
    auto it = j.find(key);
    if (it != j.end()) assign_field(*it, key, field);
  });
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == it.key();
    if (!ok) throw ParameterError("unknown config field '" + it.key() + "'");
  }
  validate(cfg);
  return cfg;
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j = ordered_json::object();
  for_each_field(const_cast<ExperimentConfig&>(cfg),
                 [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

void require(bool ok, const char* msg) {
  if (!ok) throw ParameterError(std::string("invalid config: ") + msg);
}

bool one_of(const std::string& v, std::initializer_list<const char*> opts) {
  for (const char* o : opts)
    if (v == o) return true;
  return false;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError& e) {
    throw ParameterError(e.what());  // bad config path is a usage error
  }
  return parse_config(text);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ParameterError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  ordered_json j = to_json(cfg);
  if (!j.contains(key))
    throw ParameterError("unknown config field '" + key + "'");
  // Interpret the value as JSON when possible so numbers and booleans work;
  // anything unparseable is taken as a plain string.
  ordered_json parsed = ordered_json::parse(value, nullptr, false);
  j[key] = parsed.is_discarded() ? ordered_json(value) : parsed;
  cfg = from_json(j);
}

std::string canonical_text(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return io::fnv1a64(canonical_text(cfg));
}

void validate(const ExperimentConfig& cfg) {
  require(cfg.num_classes >= 2, "num_classes must be at least 2");
  require(cfg.feature_dim >= 2, "feature_dim must be at least 2");
  require(cfg.t_sample >= 1, "t_sample must be positive");
  require(cfg.mil_k_denom >= 1, "mil_k_denom must be positive");
  require(cfg.d_model >= 1, "d_model must be positive");
  require(cfg.tf_layers >= 0, "tf_layers must be non-negative");
  require(cfg.tf_heads >= 1, "tf_heads must be positive");
  require(cfg.d_model % cfg.tf_heads == 0,
          "d_model must be divisible by tf_heads");
  require(cfg.feature_dim % cfg.tf_heads == 0,
          "feature_dim must be divisible by tf_heads");
  require(cfg.prompt_count >= 1, "prompt_count must be positive");
  require(cfg.lr > 0.0, "lr must be positive");
  require(cfg.warmup_iters >= 0, "warmup_iters must be non-negative");
  require(cfg.cycles >= 0, "cycles must be non-negative");
  require(cfg.step_iters >= 0, "step_iters must be non-negative");
  require(cfg.delta_h > cfg.delta_l, "delta_h must exceed delta_l");
  require(cfg.delta_h >= 0.0 && cfg.delta_h <= 1.0, "delta_h must be in [0,1]");
  require(cfg.delta_l >= 0.0 && cfg.delta_l <= 1.0, "delta_l must be in [0,1]");
  require(cfg.theta_cls >= 0.0 && cfg.theta_cls <= 1.0,
          "theta_cls must be in [0,1]");
  require(cfg.theta_loc >= 0.0 && cfg.theta_loc <= 1.0,
          "theta_loc must be in [0,1]");
  require(cfg.lambda >= 0.0, "lambda must be non-negative");
  require(cfg.tau > 0.0, "tau must be positive");
  require(one_of(cfg.video_score_fn, {"softmax", "sigmoid"}),
          "video_score_fn must be softmax or sigmoid");
  require(one_of(cfg.cas_squash, {"softmax", "sigmoid"}),
          "cas_squash must be softmax or sigmoid");
  require(one_of(cfg.baseline, {"warmup_only", "only_b", "only_f",
                                "alternating", "fuse_avg", "fuse_weight"}),
          "unknown baseline");
  require(one_of(cfg.eval_cas, {"cbp", "vlp", "avg", "weight"}),
          "eval_cas must be cbp, vlp, avg or weight");
  require(cfg.fuse_weight >= 0.0 && cfg.fuse_weight <= 1.0,
          "fuse_weight must be in [0,1]");
  require(one_of(cfg.nms_mode, {"linear", "gaussian"}),
          "nms_mode must be linear or gaussian");
  require(cfg.nms_iou >= 0.0 && cfg.nms_iou <= 1.0, "nms_iou must be in [0,1]");
  require(cfg.nms_floor >= 0.0, "nms_floor must be non-negative");
  require(cfg.nms_sigma > 0.0, "nms_sigma must be positive");
}

}  // namespace wtal
