#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/distill.hpp"

namespace wtal {

// Localization --------------------------------------------------------------

// Classes whose MIL video score exceeds theta_cls, ascending. When nothing
// clears the bar the single best class is returned so a video is never left
// without a prediction; score ties resolve to the lowest class id.
std::vector<int> classify_video(const Cas& cas, int k, double theta_cls,
                                const std::string& video_score_fn);

// Maximal runs of consecutive frames with activation above theta_loc, per
// selected class. A proposal scores the maximum activation inside its run.
std::vector<Proposal> extract_proposals(const Cas& cas,
                                        const std::vector<int>& classes,
                                        double theta_loc);

struct NmsParams {
  std::string mode = "linear";  // or "gaussian"
  double iou_threshold = 0.3;
  double floor = 1e-3;
  double sigma = 0.5;  // gaussian mode only
};

// Score-decay suppression over proposals of a single class. Highest score is
// kept first (ties break toward the earlier start, then earlier end); every
// remaining proposal overlapping it beyond the IoU threshold has its score
// decayed, and proposals falling below the floor are dropped.
std::vector<Proposal> soft_nms(std::vector<Proposal> proposals,
                               const NmsParams& params);

// Temporal IoU of two inclusive frame spans.
double segment_iou(int a_start, int a_end, int b_start, int b_end);

// Detection metrics ----------------------------------------------------------

struct Detection {
  std::string video_id;
  Proposal proposal;
};

// Average precision for one class. Detections are ranked by score and matched
// greedily against unmatched ground-truth segments of the same video at
// IoU strictly above the threshold; the PR curve is integrated with all-point
// interpolation. Throws MetricError when the class has no ground truth.
double average_precision(
    std::vector<Detection> detections,
    const std::map<std::string, std::vector<GroundTruthSegment>>& gt,
    double iou_threshold);

// Mean AP over classes that have at least one ground-truth segment. Throws
// MetricError when no class has any.
double mean_average_precision(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<GroundTruthSegment>>& gt,
    int num_classes, double iou_threshold);

// Frame metrics --------------------------------------------------------------

// Per-frame per-class foreground indicator grid.
struct FrameMask {
  int t = 0;
  int c = 0;
  std::vector<int> fore;  // row-major, 0 or 1

  int at(int frame, int cls) const {
    return fore[static_cast<std::size_t>(frame) * c + cls];
  }
};

FrameMask binarize_cas(const Cas& cas, double threshold);
FrameMask fore_mask(const PseudoLabelGrid& grid);

struct MiouResult {
  double fore = 0.0;
  double back = 0.0;
  int fore_pairs = 0;  // (video, class with ground truth) pairs averaged
  int videos = 0;
};

// Foreground mIoU averages the frame-set IoU between predicted and true
// frames over every (video, class) pair where the class has ground truth in
// that video. Background mIoU compares, per video, the frames predicted
// foreground-free against the frames outside every ground-truth segment.
MiouResult masked_miou(const std::vector<FrameMask>& masks,
                       const std::vector<std::vector<GroundTruthSegment>>& gt);

// Fusion ----------------------------------------------------------------------

// Element-wise blend of two activation grids of identical shape. Mode "avg"
// is the plain mean; "weight" computes w * a + (1 - w) * b.
Cas fuse_cas(const Cas& a, const Cas& b, const std::string& mode,
             double weight);

// Evaluation -------------------------------------------------------------------

struct EvalVideo {
  std::string video_id;
  int t = 0;
  std::vector<int> labels;  // one-hot video-level classes
  std::vector<GroundTruthSegment> segments;
  Cas cas;
};

struct EvalReport {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<double, double>> per_iou;  // (threshold, mAP)
  double avg_lo = 0.0;  // mean mAP over IoU 0.1 .. 0.5
  double avg_hi = 0.0;  // mean mAP over IoU 0.3 .. 0.7
  double fore_miou = 0.0;
  double back_miou = 0.0;
  std::vector<std::pair<std::string, std::vector<Proposal>>> videos;
};

// Full detection evaluation over a test split: per-video classification,
// proposal extraction, suppression, then mAP at IoU 0.1 .. 0.7 plus frame
// mIoU of the pseudo-labels induced by each video's grid. Throws MetricError
// when the split is empty.
EvalReport evaluate(const std::vector<EvalVideo>& videos, const Config& cfg,
                    std::uint64_t cfg_hash);

// Canonical JSON serialization of a report; byte-stable for fixed inputs.
std::string report_json(const EvalReport& report);
EvalReport parse_report(const std::string& json_text);

}  // namespace wtal
