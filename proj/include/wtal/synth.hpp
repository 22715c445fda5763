#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtal/data.hpp"
#include "wtal/rng.hpp"

namespace wtal {

// Controls for the synthetic corpus. The two feature streams are planted
// with opposite failure modes: the first stream marks only a scattered
// subset of action frames strongly (incomplete but precise), the second
// marks every action frame plus a halo of neighbouring background frames
// (complete but leaky). Ground-truth segments are always the full extents.
struct SynthSpec {
  std::uint64_t seed = 20240817;
  int num_videos = 60;
  int num_classes = 12;
  int feature_dim = 24;  // width of the second stream; the first uses twice this
  int t_min = 100;
  int t_max = 130;
  int segments_min = 2;
  int segments_max = 3;
  int seg_len_min = 20;
  int seg_len_max = 28;
  int min_gap = 4;              // frames kept free between planted segments
  double train_fraction = 0.7;
  double multi_class_fraction = 0.25;  // share of videos carrying two classes
  double noise_std = 0.08;             // iid Gaussian added per dimension
  int vlp_bleed = 7;                   // halo width on each side of a segment
  double vlp_bleed_mix = 0.65;         // class weight inside halo frames
  // Off-peak action frames mix class and background prototypes. Keeping the
  // class weight below 0.5 leaves them nearer the background prototype, so a
  // nearest-prototype labeling of this stream under-covers the actions.
  double cbp_offpeak_mix = 0.45;
  double peak_fraction = 0.3;          // share of action frames marked as peaks
  double fps = 25.0;
};

SynthSpec parse_synth_spec(const std::string& text);
SynthSpec load_synth_spec(const std::string& path);
std::string synth_spec_text(const SynthSpec& spec);
void validate(const SynthSpec& spec);

// Writes manifest.json plus one feature file per video and stream into
// out_dir, and returns the manifest that was written. Deterministic in
// spec.seed. Throws GenerationError when the requested segments cannot be
// packed into a drawn video length.
Manifest generate(const SynthSpec& spec, const std::string& out_dir);

// Per-frame argmax of cosine similarity against a row-major bank of
// `rows` prototypes (background expected as the last row). Ties resolve
// to the lowest row index.
std::vector<int> nearest_prototype_labels(const FeatureTensor& features,
                                          const std::vector<double>& prototypes,
                                          int rows);

}  // namespace wtal
