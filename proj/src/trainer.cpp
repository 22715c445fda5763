#include "wtal/trainer.hpp"

#include <cmath>
#include <utility>

#include <json.hpp>

#include "wtal/adam.hpp"
#include "wtal/distill.hpp"
#include "wtal/errors.hpp"
#include "wtal/inference.hpp"

namespace wtal {

namespace {

LoadedVideo pick_window(const Dataset& data, const Config& cfg, Rng& rng) {
  const auto train = data.split_indices("train");
  if (train.empty())
    throw DataError("training needs a non-empty train split");
  const int pick = rng.uniform_int(0, static_cast<int>(train.size()) - 1);
  const auto& video = data.videos[static_cast<std::size_t>(train[pick])];
  return sample_snippets(video, cfg.t_sample, rng);
}

void ensure_finite(double loss, const std::string& phase, int iteration) {
  if (!std::isfinite(loss))
    throw TrainingError("loss became non-finite in phase '" + phase +
                        "' at iteration " + std::to_string(iteration));
}

// Grades a pseudo-label grid against the window's ground truth.
std::pair<double, double> window_miou(const PseudoLabelGrid& grid,
                                      const LoadedVideo& window) {
  const auto r = masked_miou({fore_mask(grid)}, {window.rec.segments});
  return {r.fore, r.back};
}

}  // namespace

std::string history_jsonl(const std::vector<HistoryRow>& rows) {
  std::string out;
  for (const auto& row : rows) {
    nlohmann::ordered_json j;
    j["phase"] = row.phase;
    j["iteration"] = row.iteration;
    j["loss_kd"] = row.loss_kd;
    j["loss_fb"] = row.loss_fb;
    j["loss_cls"] = row.loss_cls;
    j["fore_miou"] = row.fore_miou;
    j["back_miou"] = row.back_miou;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void warmup(CbpModel& cbp, const Dataset& data, const Config& cfg, Rng& rng,
            std::vector<HistoryRow>& history) {
  ad::AdamOptimizer opt(cbp.params().params, cfg.lr);
  for (int iter = 0; iter < cfg.warmup_iters; ++iter) {
    const LoadedVideo window = pick_window(data, cfg, rng);

    ad::Graph g(true);
    const auto out = cbp.forward(g, window.cbp);
    const int k = mil_k(window.rec.t, cfg.mil_k_denom);
    const auto scores = mil_video_scores(g, out.cas, k, cfg.video_score_fn);
    const auto loss =
        loss_cls(g, scores, window.rec.labels, cfg.video_score_fn);
    const double value = loss->data[0];
    ensure_finite(value, "warmup", iter);

    opt.zero_grad();
    g.backward(loss);
    opt.step();

    const auto grid =
        make_pseudo_labels(cas_from_tensor(Branch::Cbp, out.cas),
                           window.rec.labels, cfg.delta_h, cfg.delta_l);
    const auto [fore, back] = window_miou(grid, window);
    history.push_back({"warmup", iter, 0.0, 0.0, value, fore, back});
  }
}

void b_step(const CbpModel& cbp, VlpModel& vlp, const Dataset& data,
            const Config& cfg, Rng& rng, std::vector<HistoryRow>& history,
            const std::string& phase) {
  ad::AdamOptimizer opt(vlp.params().params, cfg.lr);
  for (int iter = 0; iter < cfg.step_iters; ++iter) {
    const LoadedVideo window = pick_window(data, cfg, rng);

    Cas teacher;
    {
      ad::Graph frozen(false);
      teacher =
          cas_from_tensor(Branch::Cbp, cbp.forward(frozen, window.cbp).cas);
    }
    const auto grid = make_pseudo_labels(teacher, window.rec.labels,
                                         cfg.delta_h, cfg.delta_l);
    const auto sets = build_contrast_sets(grid);

    ad::Graph g(true);
    const auto out = vlp.forward(g, window.vlp);
    const auto kd = loss_kd(g, grid, out.cas);
    const auto fb = loss_fb(g, out.embeddings, sets, cfg.tau);
    const auto total = g.add(kd.value, g.scale(fb.value, cfg.lambda));
    const double value = total->data[0];
    ensure_finite(value, phase, iter);

    opt.zero_grad();
    g.backward(total);
    opt.step();

    const auto [fore, back] = window_miou(grid, window);
    history.push_back(
        {phase, iter, kd.value->data[0], fb.value->data[0], 0.0, fore, back});
  }
}

void f_step(const VlpModel& vlp, CbpModel& cbp, const Dataset& data,
            const Config& cfg, Rng& rng, std::vector<HistoryRow>& history,
            const std::string& phase) {
  ad::AdamOptimizer opt(cbp.params().params, cfg.lr);
  for (int iter = 0; iter < cfg.step_iters; ++iter) {
    const LoadedVideo window = pick_window(data, cfg, rng);

    Cas teacher;
    {
      ad::Graph frozen(false);
      teacher =
          cas_from_tensor(Branch::Vlp, vlp.forward(frozen, window.vlp).cas);
    }
    const auto grid = make_pseudo_labels(teacher, window.rec.labels,
                                         cfg.delta_h, cfg.delta_l);
    const auto sets = build_contrast_sets(grid);

    ad::Graph g(true);
    const auto out = cbp.forward(g, window.cbp);
    const auto kd = loss_kd(g, grid, out.cas);
    const auto fb = loss_fb(g, out.embeddings, sets, cfg.tau);
    auto total = g.add(kd.value, g.scale(fb.value, cfg.lambda));

    double cls_value = 0.0;
    if (cfg.f_step_cls) {
      const int k = mil_k(window.rec.t, cfg.mil_k_denom);
      const auto scores = mil_video_scores(g, out.cas, k, cfg.video_score_fn);
      const auto cls =
          loss_cls(g, scores, window.rec.labels, cfg.video_score_fn);
      cls_value = cls->data[0];
      total = g.add(total, cls);
    }
    const double value = total->data[0];
    ensure_finite(value, phase, iter);

    opt.zero_grad();
    g.backward(total);
    opt.step();

    const auto [fore, back] = window_miou(grid, window);
    history.push_back({phase, iter, kd.value->data[0], fb.value->data[0],
                       cls_value, fore, back});
  }
}

std::vector<HistoryRow> train_alternating(CbpModel& cbp, VlpModel& vlp,
                                          const Dataset& data,
                                          const Config& cfg, Rng& rng) {
  std::vector<HistoryRow> history;
  warmup(cbp, data, cfg, rng, history);
  for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
    b_step(cbp, vlp, data, cfg, rng, history, "b" + std::to_string(cycle));
    f_step(vlp, cbp, data, cfg, rng, history, "f" + std::to_string(cycle));
  }
  return history;
}

}  // namespace wtal
