#pragma once

#include <string>
#include <vector>

#include "wtal/cbp_model.hpp"
#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/rng.hpp"
#include "wtal/vlp_model.hpp"

namespace wtal {

// One training iteration's log line. Losses that do not apply in a phase
// stay 0; the mIoU columns grade the iteration's pseudo-labels against the
// sampled window's ground truth.
struct HistoryRow {
  std::string phase;
  int iteration = 0;
  double loss_kd = 0.0;
  double loss_fb = 0.0;
  double loss_cls = 0.0;
  double fore_miou = 0.0;
  double back_miou = 0.0;
};

// One compact JSON object per row, newline terminated.
std::string history_jsonl(const std::vector<HistoryRow>& rows);

// Video-level classification training of the localization branch. Runs
// cfg.warmup_iters Adam steps; zero iterations leave the model bit-exact.
void warmup(CbpModel& cbp, const Dataset& data, const Config& cfg, Rng& rng,
            std::vector<HistoryRow>& history);

// Distills confident pseudo-labels from the frozen localization branch into
// the similarity branch for cfg.step_iters iterations. The teacher runs
// outside the tape and its weights never change.
void b_step(const CbpModel& cbp, VlpModel& vlp, const Dataset& data,
            const Config& cfg, Rng& rng, std::vector<HistoryRow>& history,
            const std::string& phase = "b");

// The mirror image: the frozen similarity branch teaches the localization
// branch, optionally joined by the video-level loss (cfg.f_step_cls).
void f_step(const VlpModel& vlp, CbpModel& cbp, const Dataset& data,
            const Config& cfg, Rng& rng, std::vector<HistoryRow>& history,
            const std::string& phase = "f");

// warmup followed by cfg.cycles alternations of (b_step, f_step), with
// phases labeled "warmup", "b1", "f1", "b2", ... in the returned history.
std::vector<HistoryRow> train_alternating(CbpModel& cbp, VlpModel& vlp,
                                          const Dataset& data,
                                          const Config& cfg, Rng& rng);

}  // namespace wtal
