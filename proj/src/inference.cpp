#include "wtal/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "wtal/cbp_model.hpp"
#include "wtal/errors.hpp"
#include "wtal/tensor.hpp"

namespace wtal {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_grid(const Cas& cas) {
  if (cas.t <= 0 || cas.c <= 0)
    throw DimensionError("activation grid must be non-empty");
  if (cas.values.size() != static_cast<std::size_t>(cas.t) * cas.c)
    throw DimensionError("activation grid storage does not match its shape");
}

int span_length(int start, int end) { return end - start + 1; }

double decay_factor(const NmsParams& params, double iou) {
  if (params.mode == "linear") return 1.0 - iou;
  return std::exp(-(iou * iou) / params.sigma);
}

// Stable detection order: best score first, then lexicographic identity so
// equal scores rank the same way on every run.
bool detection_before(const Detection& a, const Detection& b) {
  if (a.proposal.score != b.proposal.score)
    return a.proposal.score > b.proposal.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.proposal.start != b.proposal.start)
    return a.proposal.start < b.proposal.start;
  return a.proposal.end < b.proposal.end;
}

double json_number(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw FormatError(std::string("report is missing numeric field '") + key +
                      "'");
  return it->get<double>();
}

}  // namespace

std::vector<int> classify_video(const Cas& cas, int k, double theta_cls,
                                const std::string& video_score_fn) {
  check_grid(cas);
  ad::Graph g(false);
  auto grid = ad::make_constant({cas.t, cas.c}, cas.values);
  auto scores = mil_video_scores(g, grid, k, video_score_fn);

  std::vector<int> picked;
  for (int c = 0; c < cas.c; ++c)
    if (scores->data[c] > theta_cls) picked.push_back(c);
  if (!picked.empty()) return picked;

  int best = 0;
  for (int c = 1; c < cas.c; ++c)
    if (scores->data[c] > scores->data[best]) best = c;
  return {best};
}

std::vector<Proposal> extract_proposals(const Cas& cas,
                                        const std::vector<int>& classes,
                                        double theta_loc) {
  check_grid(cas);
  std::vector<Proposal> out;
  for (int cls : classes) {
    if (cls < 0 || cls >= cas.c)
      throw DimensionError("proposal class id out of range");
    int run_start = -1;
    double run_max = 0.0;
    for (int t = 0; t <= cas.t; ++t) {
      const bool active = t < cas.t && cas.at(t, cls) > theta_loc;
      if (active) {
        if (run_start < 0) {
          run_start = t;
          run_max = cas.at(t, cls);
        } else {
          run_max = std::max(run_max, cas.at(t, cls));
        }
      } else if (run_start >= 0) {
        out.push_back({run_start, t - 1, cls, run_max});
        run_start = -1;
      }
    }
  }
  return out;
}

std::vector<Proposal> soft_nms(std::vector<Proposal> proposals,
                               const NmsParams& params) {
  if (params.mode != "linear" && params.mode != "gaussian")
    throw ParameterError("nms mode must be 'linear' or 'gaussian'");
  if (params.mode == "gaussian" && params.sigma <= 0.0)
    throw ParameterError("gaussian nms needs sigma > 0");
  for (const auto& p : proposals) {
    if (p.start < 0 || p.end < p.start)
      throw ParameterError("suppression input has an invalid span");
    if (p.category != proposals.front().category)
      throw ParameterError("suppression expects proposals of a single class");
  }

  std::vector<Proposal> kept;
  kept.reserve(proposals.size());
  while (!proposals.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < proposals.size(); ++i) {
      const Proposal& a = proposals[i];
      const Proposal& b = proposals[best];
      if (a.score > b.score ||
          (a.score == b.score &&
           (a.start < b.start || (a.start == b.start && a.end < b.end))))
        best = i;
    }
    Proposal top = proposals[best];
    proposals.erase(proposals.begin() + static_cast<std::ptrdiff_t>(best));
    kept.push_back(top);

    std::vector<Proposal> survivors;
    survivors.reserve(proposals.size());
    for (Proposal& p : proposals) {
      const double iou = segment_iou(top.start, top.end, p.start, p.end);
      if (iou > params.iou_threshold) p.score *= decay_factor(params, iou);
      if (p.score >= params.floor) survivors.push_back(p);
    }
    proposals = std::move(survivors);
  }
  return kept;
}

double segment_iou(int a_start, int a_end, int b_start, int b_end) {
  if (a_end < a_start || b_end < b_start)
    throw ParameterError("segment spans must satisfy start <= end");
  const int inter = std::min(a_end, b_end) - std::max(a_start, b_start) + 1;
  if (inter <= 0) return 0.0;
  const int uni =
      span_length(a_start, a_end) + span_length(b_start, b_end) - inter;
  return static_cast<double>(inter) / uni;
}

double average_precision(
    std::vector<Detection> detections,
    const std::map<std::string, std::vector<GroundTruthSegment>>& gt,
    double iou_threshold) {
  std::size_t total_gt = 0;
  for (const auto& [id, segs] : gt) total_gt += segs.size();
  if (total_gt == 0)
    throw MetricError("average precision needs at least one true segment");

  std::sort(detections.begin(), detections.end(), detection_before);
  std::map<std::string, std::vector<char>> matched;
  for (const auto& [id, segs] : gt)
    matched[id] = std::vector<char>(segs.size(), 0);

  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t rank = 0; rank < detections.size(); ++rank) {
    const Detection& det = detections[rank];
    auto it = gt.find(det.video_id);
    int best = -1;
    double best_iou = 0.0;
    if (it != gt.end()) {
      auto& flags = matched[det.video_id];
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (flags[j]) continue;
        const auto& seg = it->second[j];
        const double iou = segment_iou(det.proposal.start, det.proposal.end,
                                       seg.start, seg.end);
        if (iou > iou_threshold && iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) flags[static_cast<std::size_t>(best)] = 1;
    }
    if (best >= 0) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  if (precision.empty()) return 0.0;

  // All-point interpolation: clamp precision to its running maximum from the
  // right, then integrate over recall increments.
  for (std::size_t i = precision.size() - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = precision[0] * recall[0];
  for (std::size_t i = 1; i < precision.size(); ++i)
    ap += (recall[i] - recall[i - 1]) * precision[i];
  return ap;
}

double mean_average_precision(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<GroundTruthSegment>>& gt,
    int num_classes, double iou_threshold) {
  if (num_classes <= 0) throw ParameterError("num_classes must be positive");

  double sum = 0.0;
  int counted = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    std::map<std::string, std::vector<GroundTruthSegment>> cls_gt;
    for (const auto& [id, segs] : gt)
      for (const auto& seg : segs)
        if (seg.category == cls) cls_gt[id].push_back(seg);
    if (cls_gt.empty()) continue;

    std::vector<Detection> cls_dets;
    for (const auto& det : detections)
      if (det.proposal.category == cls) cls_dets.push_back(det);
    sum += average_precision(std::move(cls_dets), cls_gt, iou_threshold);
    ++counted;
  }
  if (counted == 0)
    throw MetricError("mean average precision needs ground truth segments");
  return sum / counted;
}

FrameMask binarize_cas(const Cas& cas, double threshold) {
  check_grid(cas);
  FrameMask mask{cas.t, cas.c, std::vector<int>(cas.values.size(), 0)};
  for (std::size_t i = 0; i < cas.values.size(); ++i)
    mask.fore[i] = cas.values[i] > threshold ? 1 : 0;
  return mask;
}

FrameMask fore_mask(const PseudoLabelGrid& grid) {
  FrameMask mask{grid.t, grid.c, std::vector<int>(grid.values.size(), 0)};
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    mask.fore[i] = grid.values[i] == 1 ? 1 : 0;
  return mask;
}

MiouResult masked_miou(const std::vector<FrameMask>& masks,
                       const std::vector<std::vector<GroundTruthSegment>>& gt) {
  if (masks.size() != gt.size())
    throw DimensionError("frame mIoU needs one segment list per mask");

  MiouResult result;
  double fore_sum = 0.0;
  double back_sum = 0.0;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const FrameMask& mask = masks[v];
    if (mask.t <= 0 || mask.c <= 0)
      throw DimensionError("frame mIoU mask must be non-empty");
    std::set<int> present;
    std::vector<char> any_gt(static_cast<std::size_t>(mask.t), 0);
    for (const auto& seg : gt[v]) {
      if (seg.category < 0 || seg.category >= mask.c || seg.start < 0 ||
          seg.end < seg.start || seg.end >= mask.t)
        throw DimensionError("segment does not fit the mask it is scored on");
      present.insert(seg.category);
      for (int t = seg.start; t <= seg.end; ++t)
        any_gt[static_cast<std::size_t>(t)] = 1;
    }

    for (int cls : present) {
      std::vector<char> truth(static_cast<std::size_t>(mask.t), 0);
      for (const auto& seg : gt[v])
        if (seg.category == cls)
          for (int t = seg.start; t <= seg.end; ++t)
            truth[static_cast<std::size_t>(t)] = 1;
      int inter = 0, uni = 0;
      for (int t = 0; t < mask.t; ++t) {
        const bool predicted = mask.at(t, cls) == 1;
        const bool actual = truth[static_cast<std::size_t>(t)] != 0;
        inter += predicted && actual;
        uni += predicted || actual;
      }
      fore_sum += static_cast<double>(inter) / uni;  // uni >= segment length
      ++result.fore_pairs;
    }

    int inter = 0, uni = 0;
    for (int t = 0; t < mask.t; ++t) {
      bool predicted_back = true;
      for (int cls = 0; cls < mask.c && predicted_back; ++cls)
        predicted_back = mask.at(t, cls) == 0;
      const bool actual_back = any_gt[static_cast<std::size_t>(t)] == 0;
      inter += predicted_back && actual_back;
      uni += predicted_back || actual_back;
    }
    back_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    ++result.videos;
  }

  result.fore = result.fore_pairs ? fore_sum / result.fore_pairs : 0.0;
  result.back = result.videos ? back_sum / result.videos : 0.0;
  return result;
}

Cas fuse_cas(const Cas& a, const Cas& b, const std::string& mode,
             double weight) {
  check_grid(a);
  check_grid(b);
  if (a.t != b.t || a.c != b.c)
    throw DimensionError("fusion needs grids of identical shape");
  if (mode != "avg" && mode != "weight")
    throw ParameterError("fusion mode must be 'avg' or 'weight'");
  if (weight < 0.0 || weight > 1.0)
    throw ParameterError("fusion weight must lie in [0, 1]");

  const double w = mode == "avg" ? 0.5 : weight;
  Cas fused{Branch::Fused, a.t, a.c, std::vector<double>(a.values.size())};
  for (std::size_t i = 0; i < a.values.size(); ++i)
    fused.values[i] = w * a.values[i] + (1.0 - w) * b.values[i];
  return fused;
}

EvalReport evaluate(const std::vector<EvalVideo>& videos, const Config& cfg,
                    std::uint64_t cfg_hash) {
  if (videos.empty())
    throw MetricError("evaluation needs at least one test video");

  std::vector<std::size_t> order(videos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return videos[a].video_id < videos[b].video_id;
  });

  const NmsParams nms{cfg.nms_mode, cfg.nms_iou, cfg.nms_floor, cfg.nms_sigma};
  const int num_classes = videos[order[0]].cas.c;

  EvalReport report;
  report.config_hash = cfg_hash;
  std::vector<Detection> detections;
  std::map<std::string, std::vector<GroundTruthSegment>> gt;
  std::vector<FrameMask> masks;
  std::vector<std::vector<GroundTruthSegment>> mask_gt;

  for (std::size_t idx : order) {
    const EvalVideo& video = videos[idx];
    check_grid(video.cas);
    if (video.cas.t != video.t || video.cas.c != num_classes ||
        static_cast<int>(video.labels.size()) != num_classes)
      throw DimensionError("evaluation video '" + video.video_id +
                           "' has inconsistent shapes");

    const int k = mil_k(video.t, cfg.mil_k_denom);
    const auto classes =
        classify_video(video.cas, k, cfg.theta_cls, cfg.video_score_fn);
    const auto raw = extract_proposals(video.cas, classes, cfg.theta_loc);

    std::vector<Proposal> final_props;
    for (int cls : classes) {
      std::vector<Proposal> cls_props;
      for (const auto& p : raw)
        if (p.category == cls) cls_props.push_back(p);
      if (cls_props.empty()) continue;
      for (auto& p : soft_nms(std::move(cls_props), nms))
        final_props.push_back(p);
    }
    std::sort(final_props.begin(), final_props.end(),
              [](const Proposal& a, const Proposal& b) {
                if (a.category != b.category) return a.category < b.category;
                if (a.start != b.start) return a.start < b.start;
                return a.end < b.end;
              });

    for (const auto& p : final_props)
      detections.push_back({video.video_id, p});
    gt[video.video_id] = video.segments;
    report.videos.emplace_back(video.video_id, std::move(final_props));

    const auto grid =
        make_pseudo_labels(video.cas, video.labels, cfg.delta_h, cfg.delta_l);
    masks.push_back(fore_mask(grid));
    mask_gt.push_back(video.segments);
  }

  for (int step = 1; step <= 7; ++step) {
    const double threshold = step / 10.0;
    report.per_iou.emplace_back(
        threshold,
        mean_average_precision(detections, gt, num_classes, threshold));
  }
  for (int i = 0; i < 5; ++i) {
    report.avg_lo += report.per_iou[static_cast<std::size_t>(i)].second / 5.0;
    report.avg_hi +=
        report.per_iou[static_cast<std::size_t>(i) + 2].second / 5.0;
  }

  const auto frame = masked_miou(masks, mask_gt);
  report.fore_miou = frame.fore;
  report.back_miou = frame.back;
  return report;
}

std::string report_json(const EvalReport& report) {
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(report.config_hash));

  ordered_json j;
  j["config_hash"] = hash;
  ordered_json per_iou = ordered_json::object();
  for (const auto& [threshold, value] : report.per_iou) {
    char key[8];
    std::snprintf(key, sizeof(key), "%.1f", threshold);
    per_iou[key] = value;
  }
  j["per_iou"] = per_iou;
  j["avg_0.1_0.5"] = report.avg_lo;
  j["avg_0.3_0.7"] = report.avg_hi;
  j["fore_miou"] = report.fore_miou;
  j["back_miou"] = report.back_miou;

  ordered_json videos = ordered_json::array();
  for (const auto& [id, props] : report.videos) {
    ordered_json entry;
    entry["video_id"] = id;
    ordered_json list = ordered_json::array();
    for (const auto& p : props)
      list.push_back({p.start, p.end, p.category, p.score});
    entry["proposals"] = list;
    videos.push_back(entry);
  }
  j["videos"] = videos;
  return j.dump(2) + "\n";
}

EvalReport parse_report(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("report root must be an object");

  EvalReport report;
  auto hash_it = j.find("config_hash");
  if (hash_it == j.end() || !hash_it->is_string())
    throw FormatError("report is missing the config_hash field");
  const std::string hash = hash_it->get<std::string>();
  char* end = nullptr;
  report.config_hash = std::strtoull(hash.c_str(), &end, 16);
  if (hash.empty() || end == nullptr || *end != '\0')
    throw FormatError("report config_hash is not a hex value");

  auto iou_it = j.find("per_iou");
  if (iou_it == j.end() || !iou_it->is_object())
    throw FormatError("report is missing the per_iou table");
  for (auto it = iou_it->begin(); it != iou_it->end(); ++it) {
    if (!it.value().is_number())
      throw FormatError("report per_iou values must be numbers");
    report.per_iou.emplace_back(std::stod(it.key()), it.value().get<double>());
  }
  std::sort(report.per_iou.begin(), report.per_iou.end());

  report.avg_lo = json_number(j, "avg_0.1_0.5");
  report.avg_hi = json_number(j, "avg_0.3_0.7");
  report.fore_miou = json_number(j, "fore_miou");
  report.back_miou = json_number(j, "back_miou");

  auto vids_it = j.find("videos");
  if (vids_it == j.end() || !vids_it->is_array())
    throw FormatError("report is missing the videos list");
  try {
    for (const auto& entry : *vids_it) {
      if (!entry.is_object() || !entry.contains("video_id") ||
          !entry.contains("proposals"))
        throw FormatError("report video entries need video_id and proposals");
      std::vector<Proposal> props;
      for (const auto& row : entry["proposals"]) {
        if (!row.is_array() || row.size() != 4)
          throw FormatError(
              "report proposals must be [start, end, class, score]");
        props.push_back({row[0].get<int>(), row[1].get<int>(),
                         row[2].get<int>(), row[3].get<double>()});
      }
      report.videos.emplace_back(entry["video_id"].get<std::string>(),
                                 std::move(props));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report video entry is malformed: ") +
                      e.what());
  }
  return report;
}

}  // namespace wtal
