#include "wtal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wtal/distill.hpp"
#include "wtal/errors.hpp"

namespace wtal {

namespace {

ExperimentConfig validated(ExperimentConfig cfg, const Manifest& manifest) {
  if (cfg.num_classes != manifest.num_classes)
    throw ParameterError("config expects " + std::to_string(cfg.num_classes) +
                         " classes but the dataset has " +
                         std::to_string(manifest.num_classes));
  if (cfg.feature_dim != manifest.feature_dim)
    throw ParameterError("config expects feature width " +
                         std::to_string(cfg.feature_dim) +
                         " but the dataset provides " +
                         std::to_string(manifest.feature_dim));
  return cfg;
}

Rng child_rng(std::uint64_t seed, std::uint64_t tag) {
  return Rng(seed).split(tag);
}

void require_match(std::uint64_t stored, std::uint64_t current,
                   const char* what) {
  if (stored != current)
    throw DataError(std::string("checkpoint was written under a different ") +
                    what + "; pass --force to load it anyway");
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg, Dataset data)
    : cfg_(validated(std::move(cfg), data.manifest)),
      data_(std::move(data)),
      cbp_(cfg_, child_rng(cfg_.seed, 1)),
      vlp_(cfg_, data_.manifest, child_rng(cfg_.seed, 2)),
      rng_(child_rng(cfg_.seed, 3)) {}

std::vector<HistoryRow> run_schedule(Experiment& ex) {
  const ExperimentConfig& cfg = ex.cfg();
  std::vector<HistoryRow> history;
  if (cfg.baseline == "warmup_only") {
    warmup(ex.cbp(), ex.data(), cfg, ex.rng(), history);
    return history;
  }
  if (cfg.baseline == "only_b") {
    warmup(ex.cbp(), ex.data(), cfg, ex.rng(), history);
    for (int cycle = 1; cycle <= cfg.cycles; ++cycle)
      b_step(ex.cbp(), ex.vlp(), ex.data(), cfg, ex.rng(), history,
             "b" + std::to_string(cycle));
    return history;
  }
  if (cfg.baseline == "only_f") {
    warmup(ex.cbp(), ex.data(), cfg, ex.rng(), history);
    for (int cycle = 1; cycle <= cfg.cycles; ++cycle)
      f_step(ex.vlp(), ex.cbp(), ex.data(), cfg, ex.rng(), history,
             "f" + std::to_string(cycle));
    return history;
  }
  // alternating and both fuse_* baselines share the full schedule
  return train_alternating(ex.cbp(), ex.vlp(), ex.data(), cfg, ex.rng());
}

std::vector<ad::TensorPtr> checkpoint_params(const Experiment& ex) {
  std::vector<ad::TensorPtr> params = ex.cbp().params().params;
  const auto& vlp = ex.vlp().params().params;
  params.insert(params.end(), vlp.begin(), vlp.end());
  return params;
}

io::CheckpointMeta checkpoint_meta(const Experiment& ex) {
  io::CheckpointMeta meta;
  meta.config_hash = config_hash(ex.cfg());
  meta.data_hash = ex.data().data_hash;
  meta.frozen_hash = ex.vlp().frozen_hash();
  return meta;
}

void save_experiment(const Experiment& ex, const std::string& path) {
  io::save_checkpoint(path, checkpoint_params(ex), checkpoint_meta(ex));
}

io::CheckpointMeta load_experiment(Experiment& ex, const std::string& path,
                                   bool force) {
  const auto meta = io::load_checkpoint(path, checkpoint_params(ex));
  if (!force) {
    require_match(meta.config_hash, config_hash(ex.cfg()), "config");
    require_match(meta.data_hash, ex.data().data_hash, "dataset");
    require_match(meta.frozen_hash, ex.vlp().frozen_hash(),
                  "frozen weight state");
  }
  return meta;
}

std::string effective_eval_cas(const ExperimentConfig& cfg) {
  if (cfg.baseline == "fuse_avg") return "avg";
  if (cfg.baseline == "fuse_weight") return "weight";
  return cfg.eval_cas;
}

EvalReport evaluate_experiment(const Experiment& ex) {
  const ExperimentConfig& cfg = ex.cfg();
  const std::string mode = effective_eval_cas(cfg);
  const bool need_cbp = mode != "vlp";
  const bool need_vlp = mode != "cbp";

  std::vector<EvalVideo> videos;
  for (int idx : ex.data().split_indices("test")) {
    const LoadedVideo& video = ex.data().videos[static_cast<std::size_t>(idx)];
    ad::Graph g(false);
    Cas cb, vl;
    if (need_cbp)
      cb = cas_from_tensor(Branch::Cbp, ex.cbp().forward(g, video.cbp).cas);
    if (need_vlp)
      vl = cas_from_tensor(Branch::Vlp, ex.vlp().forward(g, video.vlp).cas);

    Cas grid;
    if (mode == "cbp")
      grid = std::move(cb);
    else if (mode == "vlp")
      grid = std::move(vl);
    else
      grid = fuse_cas(cb, vl, mode, cfg.fuse_weight);

    videos.push_back({video.rec.video_id, video.rec.t, video.rec.labels,
                      video.rec.segments, std::move(grid)});
  }
  return evaluate(videos, cfg, config_hash(cfg));
}

std::string comparison_table(
    std::vector<std::pair<std::string, EvalReport>> reports) {
  std::sort(reports.begin(), reports.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::size_t width = 8;
  for (const auto& [name, report] : reports)
    width = std::max(width, name.size());

  auto map_at = [](const EvalReport& report, double threshold) {
    for (const auto& [t, value] : report.per_iou)
      if (std::fabs(t - threshold) < 1e-9) return value;
    return 0.0;
  };

  char line[256];
  std::snprintf(line, sizeof(line),
                "%-*s  avg[0.1:0.5]  avg[0.3:0.7]  mAP@0.5  fore_mIoU  "
                "back_mIoU\n",
                static_cast<int>(width), "run");
  std::string out = line;
  out += std::string(out.size() - 1, '-') + "\n";
  for (const auto& [name, report] : reports) {
    std::snprintf(line, sizeof(line),
                  "%-*s  %12.4f  %12.4f  %7.4f  %9.4f  %9.4f\n",
                  static_cast<int>(width), name.c_str(), report.avg_lo,
                  report.avg_hi, map_at(report, 0.5), report.fore_miou,
                  report.back_miou);
    out += line;
  }
  return out;
}

}  // namespace wtal
