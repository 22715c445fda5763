#include "wtal/distill.hpp"

#include <cmath>

#include "wtal/errors.hpp"

namespace wtal {

namespace {
constexpr double kProbFloor = 1e-7;
}

Cas cas_from_tensor(Branch branch, const ad::TensorPtr& tensor) {
  if (!tensor || tensor->shape.size() != 2)
    throw DimensionError("cas_from_tensor: expected a rank-2 tensor");
  Cas cas;
  cas.branch = branch;
  cas.t = tensor->rows();
  cas.c = tensor->cols();
  cas.values = tensor->data;
  return cas;
}

PseudoLabelGrid make_pseudo_labels(const Cas& cas, const std::vector<int>& labels,
                                   double delta_h, double delta_l) {
  if (!(delta_h > delta_l))
    throw ParameterError("pseudo labels: need delta_h > delta_l");
  if (static_cast<int>(labels.size()) != cas.c)
    throw DimensionError("pseudo labels: label vector does not match classes");

  PseudoLabelGrid grid;
  grid.source = cas.branch;
  grid.t = cas.t;
  grid.c = cas.c;
  grid.labels = labels;
  grid.values.resize(static_cast<std::size_t>(cas.t) * cas.c);
  for (int t = 0; t < cas.t; ++t) {
    for (int c = 0; c < cas.c; ++c) {
      int h = 0;  // absent classes are confidently background everywhere
      if (labels[c] == 1) {
        const double p = cas.at(t, c);
        h = p > delta_h ? 1 : (p < delta_l ? 0 : -1);
      }
      grid.values[static_cast<std::size_t>(t) * cas.c + c] = h;
    }
  }
  return grid;
}

ContrastSets build_contrast_sets(const PseudoLabelGrid& grid) {
  std::vector<std::vector<int>> fore_classes(grid.t);
  std::vector<bool> is_fore(grid.t, false), is_back(grid.t, false);
  for (int t = 0; t < grid.t; ++t) {
    bool confident_zero_true_class = false;
    for (int c = 0; c < grid.c; ++c) {
      const int h = grid.at(t, c);
      if (h == 1) fore_classes[t].push_back(c);
      if (h == 0 && grid.labels[c] == 1) confident_zero_true_class = true;
    }
    is_fore[t] = !fore_classes[t].empty();
    // Background needs the frame to be confidently off for a class that is
    // actually present; absent-class columns alone say nothing about it.
    is_back[t] = !is_fore[t] && confident_zero_true_class;
  }

  ContrastSets sets;
  for (int t = 0; t < grid.t; ++t)
    if (is_back[t]) sets.negatives.push_back(t);
  for (int i = 0; i < grid.t; ++i) {
    if (!is_fore[i]) continue;
    std::vector<int> pos;
    for (int m = 0; m < grid.t; ++m) {
      if (m == i || !is_fore[m]) continue;
      bool shares = false;
      for (int c : fore_classes[i])
        if (grid.at(m, c) == 1) shares = true;
      if (shares) pos.push_back(m);
    }
    sets.anchors.push_back(i);
    sets.positives.push_back(std::move(pos));
  }
  return sets;
}

LossTerm loss_kd(ad::Graph& g, const PseudoLabelGrid& grid, ad::TensorPtr cas) {
  if (cas->rows() != grid.t || cas->cols() != grid.c)
    throw DimensionError("loss_kd: grid and CAS shapes differ");

  const std::size_t n = grid.values.size();
  std::vector<double> fore_mask(n, 0.0), back_mask(n, 0.0);
  long confident = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.values[i] == 1) {
      fore_mask[i] = 1.0;
      ++confident;
    } else if (grid.values[i] == 0) {
      back_mask[i] = 1.0;
      ++confident;
    }
  }
  if (confident == 0) return {ad::make_scalar(0.0), true};

  auto fore = ad::make_constant({grid.t, grid.c}, fore_mask);
  auto back = ad::make_constant({grid.t, grid.c}, back_mask);
  auto log_p = g.log(g.clamp(cas, kProbFloor, 1.0 - kProbFloor));
  auto one_minus = g.add_scalar(g.scale(cas, -1.0), 1.0);
  auto log_q = g.log(g.clamp(one_minus, kProbFloor, 1.0 - kProbFloor));
  auto ll = g.add(g.mul(fore, log_p), g.mul(back, log_q));
  return {g.scale(g.sum(ll), -1.0 / static_cast<double>(confident)), false};
}

LossTerm loss_fb(ad::Graph& g, ad::TensorPtr embeddings,
                 const ContrastSets& sets, double tau) {
  if (tau <= 0.0) throw ParameterError("loss_fb: tau must be positive");
  const int t = embeddings->rows();
  auto in_range = [t](int i) { return i >= 0 && i < t; };
  for (int i : sets.anchors)
    if (!in_range(i)) throw DimensionError("loss_fb: anchor index out of range");
  for (const auto& pos : sets.positives)
    for (int i : pos)
      if (!in_range(i)) throw DimensionError("loss_fb: positive index out of range");
  for (int i : sets.negatives)
    if (!in_range(i)) throw DimensionError("loss_fb: negative index out of range");

  std::vector<int> kept;
  for (std::size_t a = 0; a < sets.anchors.size(); ++a)
    if (!sets.positives[a].empty() && !sets.negatives.empty())
      kept.push_back(static_cast<int>(a));
  if (kept.empty()) return {ad::make_scalar(0.0), true};

  std::vector<double> pos_mask(static_cast<std::size_t>(t) * t, 0.0);
  std::vector<double> den_mask(static_cast<std::size_t>(t) * t, 0.0);
  std::vector<int> anchor_rows;
  for (int a : kept) {
    const int i = sets.anchors[a];
    anchor_rows.push_back(i);
    for (int m : sets.positives[a]) {
      pos_mask[static_cast<std::size_t>(i) * t + m] = 1.0;
      den_mask[static_cast<std::size_t>(i) * t + m] = 1.0;
    }
    for (int j : sets.negatives)
      den_mask[static_cast<std::size_t>(i) * t + j] = 1.0;
  }

  auto f = g.l2_normalize_rows(embeddings);
  auto sims = g.exp(g.scale(g.matmul(f, g.transpose(f)), 1.0 / tau));
  auto pos = g.row_sum(g.mul(sims, ad::make_constant({t, t}, pos_mask)));
  auto den = g.row_sum(g.mul(sims, ad::make_constant({t, t}, den_mask)));
  auto pos_a = g.gather_rows(g.reshape(pos, {t, 1}), anchor_rows);
  auto den_a = g.gather_rows(g.reshape(den, {t, 1}), anchor_rows);
  auto per_anchor = g.sub(g.log(den_a), g.log(pos_a));
  return {g.scale(g.sum(per_anchor), 1.0 / static_cast<double>(kept.size())),
          false};
}

LossTerm loss_total(ad::Graph& g, const PseudoLabelGrid& grid,
                    ad::TensorPtr cas, ad::TensorPtr embeddings,
                    const ContrastSets& sets, double lambda, double tau) {
  const LossTerm kd = loss_kd(g, grid, cas);
  const LossTerm fb = loss_fb(g, embeddings, sets, tau);
  return {g.add(kd.value, g.scale(fb.value, lambda)),
          kd.degenerate || fb.degenerate};
}

}  // namespace wtal
