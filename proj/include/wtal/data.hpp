#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtal/rng.hpp"

namespace wtal {

enum class Stream { Cbp, Vlp };
enum class Branch { Cbp, Vlp, Fused };

struct GroundTruthSegment {
  int start = 0;  // frame index
  int end = 0;    // inclusive frame index
  int category = 0;

  int length() const { return end - start + 1; }
};

struct VideoRecord {
  std::string video_id;
  std::string split;  // "train" or "test"
  int t = 0;
  std::vector<int> labels;  // one-hot over classes
  std::vector<GroundTruthSegment> segments;
  std::string cbp_path;  // resolved on load
  std::string vlp_path;
};

struct FeatureTensor {
  Stream stream = Stream::Cbp;
  int t = 0;
  int d = 0;
  std::vector<double> values;  // row-major T x D

  double at(int frame, int dim) const {
    return values[static_cast<std::size_t>(frame) * d + dim];
  }
  double& at(int frame, int dim) {
    return values[static_cast<std::size_t>(frame) * d + dim];
  }
};

// Per-frame per-class activation grid with entries in [0,1].
struct Cas {
  Branch branch = Branch::Cbp;
  int t = 0;
  int c = 0;
  std::vector<double> values;

  double at(int frame, int cls) const {
    return values[static_cast<std::size_t>(frame) * c + cls];
  }
  double& at(int frame, int cls) {
    return values[static_cast<std::size_t>(frame) * c + cls];
  }
};

struct Proposal {
  int start = 0;
  int end = 0;  // inclusive
  int category = 0;
  double score = 0.0;
};

// Class prototype banks and the per-dataset constants shared by both
// branches. Prototypes have one row per class plus a final background row;
// the VLP rows double as the frozen class token embeddings.
struct Manifest {
  int num_classes = 0;
  int feature_dim = 0;  // VLP width; the CBP stream is twice as wide
  double fps = 25.0;
  std::uint64_t text_seed = 0;
  std::vector<std::string> class_names;
  std::vector<double> cbp_prototypes;  // (C+1) x 2D
  std::vector<double> vlp_prototypes;  // (C+1) x D
  std::vector<VideoRecord> videos;     // sorted by video_id
};

struct LoadedVideo {
  VideoRecord rec;
  FeatureTensor cbp;
  FeatureTensor vlp;
};

struct Dataset {
  Manifest manifest;
  std::vector<LoadedVideo> videos;
  std::uint64_t data_hash = 0;  // FNV-1a of the manifest file bytes

  std::vector<int> split_indices(const std::string& split) const;
};

// Manifest JSON I/O. Loading validates every record (label sizes, segment
// bounds, feature files present with matching T), resolves feature paths
// relative to the manifest, sorts videos by id, and reports problems as
// DataError naming the offending video. Feature data is loaded eagerly.
Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& manifest);
Dataset load_dataset(const std::string& dir);  // expects dir/manifest.json

// Feature file round trip ("WTALFEAT" header, f64 little-endian payload).
FeatureTensor load_features(const std::string& path, Stream stream);
void save_features(const std::string& path, const FeatureTensor& features);

// Random contiguous crop of t_sample frames; shorter videos pass through
// whole. Segments are clipped and shifted into window coordinates, and
// segments left empty by the clip are dropped.
LoadedVideo sample_snippets(const LoadedVideo& video, int t_sample, Rng& rng);

}  // namespace wtal
