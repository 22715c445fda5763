#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wtal/cbp_model.hpp"
#include "wtal/checkpoint.hpp"
#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/inference.hpp"
#include "wtal/rng.hpp"
#include "wtal/trainer.hpp"
#include "wtal/vlp_model.hpp"

namespace wtal {

// A dataset and both branches wired to one config. All randomness flows from
// cfg.seed through fixed sub-streams, so construction is reproducible; the
// config must agree with the manifest on class count and feature width.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, Dataset data);

  const ExperimentConfig& cfg() const { return cfg_; }
  const Dataset& data() const { return data_; }
  CbpModel& cbp() { return cbp_; }
  const CbpModel& cbp() const { return cbp_; }
  VlpModel& vlp() { return vlp_; }
  const VlpModel& vlp() const { return vlp_; }
  Rng& rng() { return rng_; }

 private:
  ExperimentConfig cfg_;
  Dataset data_;
  CbpModel cbp_;
  VlpModel vlp_;
  Rng rng_;
};

// Runs the schedule selected by cfg.baseline: warmup alone, warmup plus
// one-sided distillation cycles, or the full alternation (the fuse_*
// baselines train exactly like "alternating" and differ only at evaluation).
std::vector<HistoryRow> run_schedule(Experiment& ex);

// Both branches' trainable parameters in registration order, the unit a
// checkpoint stores.
std::vector<ad::TensorPtr> checkpoint_params(const Experiment& ex);

io::CheckpointMeta checkpoint_meta(const Experiment& ex);

void save_experiment(const Experiment& ex, const std::string& path);

// Restores trainable weights from a checkpoint into the experiment. Unless
// force is set, a checkpoint written under a different config, dataset, or
// frozen-weight state is rejected with DataError.
io::CheckpointMeta load_experiment(Experiment& ex, const std::string& path,
                                   bool force);

// The grid the report is computed on: the fuse_* baselines force fusion,
// every other baseline defers to cfg.eval_cas.
std::string effective_eval_cas(const ExperimentConfig& cfg);

// Forwards every test video through the branches the eval grid needs and
// runs the full detection evaluation.
EvalReport evaluate_experiment(const Experiment& ex);

// Fixed-width comparison across named reports, sorted by name.
std::string comparison_table(
    std::vector<std::pair<std::string, EvalReport>> reports);

}  // namespace wtal
