#pragma once

#include <vector>

#include "wtal/data.hpp"
#include "wtal/tensor.hpp"

namespace wtal {

// Ternary per-frame, per-class supervision distilled from a teacher CAS:
// 1 = confident foreground, 0 = confident background, -1 = uncertain.
// Classes absent from the video label are confidently background across
// the whole grid. The weak labels ride along because the background rule
// for contrastive sets needs to know which classes were present.
struct PseudoLabelGrid {
  Branch source = Branch::Cbp;
  int t = 0;
  int c = 0;
  std::vector<int> values;  // row-major, entries in {-1, 0, 1}
  std::vector<int> labels;  // video-level multi-hot
  int at(int frame, int cls) const {
    return values[static_cast<std::size_t>(frame) * c + cls];
  }
};

// Frame index sets for the foreground/background contrastive term: one
// positive set per anchor (other confident-foreground frames sharing a
// class) and a single shared negative set of confident background frames.
struct ContrastSets {
  std::vector<int> anchors;
  std::vector<std::vector<int>> positives;  // parallel to anchors
  std::vector<int> negatives;
};

// A loss tensor plus a degenerate-input flag (no confident entries, or no
// usable anchors): the value is exactly zero when the flag is set.
struct LossTerm {
  ad::TensorPtr value;
  bool degenerate = false;
};

Cas cas_from_tensor(Branch branch, const ad::TensorPtr& tensor);

PseudoLabelGrid make_pseudo_labels(const Cas& cas, const std::vector<int>& labels,
                                   double delta_h, double delta_l);

ContrastSets build_contrast_sets(const PseudoLabelGrid& grid);

// Bernoulli KL between the confident grid entries and the student CAS,
// averaged over the confident entries; uncertain entries contribute
// nothing, in value and in gradient.
LossTerm loss_kd(ad::Graph& g, const PseudoLabelGrid& grid, ad::TensorPtr cas);

// InfoNCE over frame embeddings: anchors pull toward their positives and
// away from the shared negatives. Anchors missing a positive or negative
// are skipped; the result is averaged over surviving anchors.
LossTerm loss_fb(ad::Graph& g, ad::TensorPtr embeddings,
                 const ContrastSets& sets, double tau);

LossTerm loss_total(ad::Graph& g, const PseudoLabelGrid& grid,
                    ad::TensorPtr cas, ad::TensorPtr embeddings,
                    const ContrastSets& sets, double lambda, double tau);

}  // namespace wtal
