#include "wtal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>

#include <json.hpp>

#include "wtal/binio.hpp"
#include "wtal/errors.hpp"

namespace wtal {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename Fn>
void for_each_spec_field(SynthSpec& s, Fn&& fn) {
  fn("seed", s.seed);
  fn("num_videos", s.num_videos);
  fn("num_classes", s.num_classes);
  fn("feature_dim", s.feature_dim);
  fn("t_min", s.t_min);
  fn("t_max", s.t_max);
  fn("segments_min", s.segments_min);
  fn("segments_max", s.segments_max);
  fn("seg_len_min", s.seg_len_min);
  fn("seg_len_max", s.seg_len_max);
  fn("min_gap", s.min_gap);
  fn("train_fraction", s.train_fraction);
  fn("multi_class_fraction", s.multi_class_fraction);
  fn("noise_std", s.noise_std);
  fn("vlp_bleed", s.vlp_bleed);
  fn("vlp_bleed_mix", s.vlp_bleed_mix);
  fn("cbp_offpeak_mix", s.cbp_offpeak_mix);
  fn("peak_fraction", s.peak_fraction);
  fn("fps", s.fps);
}

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParameterError(std::string("generator spec: field '") + key +
                         "' has the wrong type");
  }
}

// Rows of `bank` (count x width) are replaced by an orthonormal basis of
// their span, so cosine scores against mixtures of prototypes reduce to
// the mixture weights exactly.
void orthonormalize_rows(std::vector<double>& bank, int count, int width) {
  for (int i = 0; i < count; ++i) {
    double* row = bank.data() + static_cast<std::size_t>(i) * width;
    for (int j = 0; j < i; ++j) {
      const double* prev = bank.data() + static_cast<std::size_t>(j) * width;
      double dot = 0.0;
      for (int d = 0; d < width; ++d) dot += row[d] * prev[d];
      for (int d = 0; d < width; ++d) row[d] -= dot * prev[d];
    }
    double norm2 = 0.0;
    for (int d = 0; d < width; ++d) norm2 += row[d] * row[d];
    if (norm2 < 1e-12)
      throw GenerationError("prototype bank degenerated during orthonormalization");
    const double inv = 1.0 / std::sqrt(norm2);
    for (int d = 0; d < width; ++d) row[d] *= inv;
  }
}

std::vector<double> random_orthonormal_bank(Rng& rng, int count, int width) {
  std::vector<double> bank(static_cast<std::size_t>(count) * width);
  for (auto& v : bank) v = rng.normal();
  orthonormalize_rows(bank, count, width);
  return bank;
}

// Places `lengths` in order into [0, t) with at least min_gap frames
// between consecutive segments, spreading the leftover slack uniformly.
std::vector<std::pair<int, int>> pack_segments(const std::vector<int>& lengths,
                                               int t, int min_gap, Rng& rng) {
  const int n = static_cast<int>(lengths.size());
  const int total = std::accumulate(lengths.begin(), lengths.end(), 0);
  const int slack = t - total - (n - 1) * min_gap;
  if (slack < 0)
    throw GenerationError("cannot pack " + std::to_string(n) +
                          " segments totalling " + std::to_string(total) +
                          " frames into a video of " + std::to_string(t));
  // n sorted cuts in [0, slack] split the slack into n+1 ordered parts.
  std::vector<int> cuts(n);
  for (auto& c : cuts) c = rng.uniform_int(0, slack);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::pair<int, int>> placed;
  int cursor = 0, prev_cut = 0;
  for (int i = 0; i < n; ++i) {
    cursor += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    if (i > 0) cursor += min_gap;
    placed.emplace_back(cursor, cursor + lengths[i] - 1);
    cursor += lengths[i];
  }
  return placed;
}

std::string video_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%03d", i);
  return buf;
}

}  // namespace

SynthSpec parse_synth_spec(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError(std::string("generator spec is not valid JSON: ") +
                         e.what());
  }
  if (!j.is_object()) throw ParameterError("generator spec must be a JSON object");

  SynthSpec s;
  std::vector<std::string> known;
  for_each_spec_field(s, [&](const char* key, auto& field) {
    known.emplace_back(key);
    read_field(j, key, field);
  });
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParameterError("generator spec: unknown field '" + key + "'");
  }
  validate(s);
  return s;
}

SynthSpec load_synth_spec(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError& e) {
    throw ParameterError(e.what());
  }
  return parse_synth_spec(text);
}

std::string synth_spec_text(const SynthSpec& spec) {
  ordered_json j = ordered_json::object();
  for_each_spec_field(const_cast<SynthSpec&>(spec),
                      [&](const char* key, auto& field) { j[key] = field; });
  return j.dump(2) + "\n";
}

void validate(const SynthSpec& s) {
  auto fail = [](const std::string& msg) {
    throw ParameterError("generator spec: " + msg);
  };
  if (s.num_videos < 2) fail("num_videos must be at least 2");
  if (s.num_classes < 1) fail("num_classes must be positive");
  if (s.feature_dim <= s.num_classes)
    fail("feature_dim must exceed num_classes so prototypes stay orthonormal");
  if (s.t_min < 1 || s.t_min > s.t_max) fail("need 1 <= t_min <= t_max");
  if (s.segments_min < 1 || s.segments_min > s.segments_max)
    fail("need 1 <= segments_min <= segments_max");
  if (s.seg_len_min < 1 || s.seg_len_min > s.seg_len_max)
    fail("need 1 <= seg_len_min <= seg_len_max");
  if (s.min_gap < 0) fail("min_gap must be non-negative");
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
    fail("train_fraction must lie strictly between 0 and 1");
  const int n_train = static_cast<int>(std::lround(s.train_fraction * s.num_videos));
  if (n_train < 1 || n_train >= s.num_videos)
    fail("train_fraction leaves one of the splits empty");
  if (s.multi_class_fraction < 0.0 || s.multi_class_fraction > 1.0)
    fail("multi_class_fraction must lie in [0, 1]");
  if (s.noise_std < 0.0) fail("noise_std must be non-negative");
  if (s.vlp_bleed < 0) fail("vlp_bleed must be non-negative");
  if (!(s.vlp_bleed_mix > 0.0 && s.vlp_bleed_mix < 1.0))
    fail("vlp_bleed_mix must lie strictly between 0 and 1");
  if (!(s.cbp_offpeak_mix > 0.0 && s.cbp_offpeak_mix < 1.0))
    fail("cbp_offpeak_mix must lie strictly between 0 and 1");
  if (!(s.peak_fraction > 0.0 && s.peak_fraction <= 1.0))
    fail("peak_fraction must lie in (0, 1]");
  if (!(s.fps > 0.0)) fail("fps must be positive");
}

std::vector<int> nearest_prototype_labels(const FeatureTensor& features,
                                          const std::vector<double>& prototypes,
                                          int rows) {
  const int width = features.d;
  if (rows < 1 ||
      prototypes.size() != static_cast<std::size_t>(rows) * width)
    throw DimensionError("nearest_prototype_labels: bank shape mismatch");
  std::vector<double> proto_norm(rows);
  for (int r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (int d = 0; d < width; ++d) {
      const double v = prototypes[static_cast<std::size_t>(r) * width + d];
      n2 += v * v;
    }
    proto_norm[r] = std::sqrt(n2);
  }
  std::vector<int> labels(features.t);
  for (int i = 0; i < features.t; ++i) {
    const double* x = features.values.data() + static_cast<std::size_t>(i) * width;
    double xn = 0.0;
    for (int d = 0; d < width; ++d) xn += x[d] * x[d];
    xn = std::sqrt(xn);
    int best = 0;
    double best_cos = -2.0;
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      const double* p = prototypes.data() + static_cast<std::size_t>(r) * width;
      for (int d = 0; d < width; ++d) dot += x[d] * p[d];
      const double denom = xn * proto_norm[r];
      const double cosv = denom > 1e-12 ? dot / denom : 0.0;
      if (cosv > best_cos) {
        best_cos = cosv;
        best = r;
      }
    }
    labels[i] = best;
  }
  return labels;
}

Manifest generate(const SynthSpec& spec, const std::string& out_dir) {
  validate(spec);
  std::filesystem::create_directories(out_dir);

  const int c = spec.num_classes;
  const int d = spec.feature_dim;
  const int cbp_width = 2 * d;
  Rng root(spec.seed);

  Manifest m;
  m.num_classes = c;
  m.feature_dim = d;
  m.fps = spec.fps;
  m.text_seed = spec.seed;
  for (int k = 0; k < c; ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02d", k);
    m.class_names.emplace_back(buf);
  }
  {
    Rng proto_rng = root.split(1);
    m.cbp_prototypes = random_orthonormal_bank(proto_rng, c + 1, cbp_width);
    m.vlp_prototypes = random_orthonormal_bank(proto_rng, c + 1, d);
  }
  const double* cbp_bg = m.cbp_prototypes.data() +
                         static_cast<std::size_t>(c) * cbp_width;
  const double* vlp_bg = m.vlp_prototypes.data() + static_cast<std::size_t>(c) * d;

  const int n_train = static_cast<int>(
      std::lround(spec.train_fraction * spec.num_videos));

  for (int vi = 0; vi < spec.num_videos; ++vi) {
    Rng rng = root.split(100 + static_cast<std::uint64_t>(vi));
    VideoRecord rec;
    rec.video_id = video_name(vi);
    rec.split = vi < n_train ? "train" : "test";
    rec.t = rng.uniform_int(spec.t_min, spec.t_max);
    rec.labels.assign(c, 0);

    // Cycle the primary class so both splits cover every class; a slice of
    // videos carries a second class as well.
    std::vector<int> classes = {vi % c};
    if (c > 1 && rng.uniform() < spec.multi_class_fraction) {
      int other = rng.uniform_int(0, c - 2);
      if (other >= classes[0]) ++other;
      classes.push_back(other);
    }
    for (int cls : classes) rec.labels[cls] = 1;

    const int n_seg = rng.uniform_int(spec.segments_min, spec.segments_max);
    std::vector<int> lengths(n_seg);
    for (auto& l : lengths) l = rng.uniform_int(spec.seg_len_min, spec.seg_len_max);
    const auto placed = pack_segments(lengths, rec.t, spec.min_gap, rng);
    for (int si = 0; si < n_seg; ++si) {
      // Alternate classes so every listed class owns at least one segment.
      const int cls = classes[si % classes.size()];
      rec.segments.push_back({placed[si].first, placed[si].second, cls});
    }

    FeatureTensor cbp, vlp;
    cbp.stream = Stream::Cbp;
    cbp.t = rec.t;
    cbp.d = cbp_width;
    cbp.values.resize(static_cast<std::size_t>(rec.t) * cbp_width);
    vlp.stream = Stream::Vlp;
    vlp.t = rec.t;
    vlp.d = d;
    vlp.values.resize(static_cast<std::size_t>(rec.t) * d);
    for (int t = 0; t < rec.t; ++t) {
      std::copy(cbp_bg, cbp_bg + cbp_width,
                cbp.values.data() + static_cast<std::size_t>(t) * cbp_width);
      std::copy(vlp_bg, vlp_bg + d,
                vlp.values.data() + static_cast<std::size_t>(t) * d);
    }

    std::vector<bool> is_action(rec.t, false);
    for (const auto& seg : rec.segments) {
      const double* cp = m.cbp_prototypes.data() +
                         static_cast<std::size_t>(seg.category) * cbp_width;
      const double* vp = m.vlp_prototypes.data() +
                         static_cast<std::size_t>(seg.category) * d;
      const int len = seg.length();
      const int n_peak = std::max(
          1, static_cast<int>(std::lround(spec.peak_fraction * len)));
      std::vector<int> order(len);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      std::vector<bool> peak(len, false);
      for (int i = 0; i < n_peak; ++i) peak[order[i]] = true;

      for (int off = 0; off < len; ++off) {
        const int t = seg.start + off;
        is_action[t] = true;
        double* cr = cbp.values.data() + static_cast<std::size_t>(t) * cbp_width;
        double* vr = vlp.values.data() + static_cast<std::size_t>(t) * d;
        const double a = peak[off] ? 1.0 : spec.cbp_offpeak_mix;
        for (int k = 0; k < cbp_width; ++k)
          cr[k] = a * cp[k] + (1.0 - a) * cbp_bg[k];
        std::copy(vp, vp + d, vr);
      }
    }

    // The leaky stream also fires on a halo of background frames around
    // each segment; the precise stream keeps them as pure background.
    std::vector<bool> bled(rec.t, false);
    for (const auto& seg : rec.segments) {
      const double* vp = m.vlp_prototypes.data() +
                         static_cast<std::size_t>(seg.category) * d;
      for (int t = std::max(0, seg.start - spec.vlp_bleed);
           t <= std::min(rec.t - 1, seg.end + spec.vlp_bleed); ++t) {
        if (is_action[t] || bled[t]) continue;
        bled[t] = true;
        double* vr = vlp.values.data() + static_cast<std::size_t>(t) * d;
        for (int k = 0; k < d; ++k)
          vr[k] = spec.vlp_bleed_mix * vp[k] +
                  (1.0 - spec.vlp_bleed_mix) * vlp_bg[k];
      }
    }

    if (spec.noise_std > 0.0) {
      for (auto& v : cbp.values) v += rng.normal(0.0, spec.noise_std);
      for (auto& v : vlp.values) v += rng.normal(0.0, spec.noise_std);
    }

    rec.cbp_path = rec.video_id + "_cbp.bin";
    rec.vlp_path = rec.video_id + "_vlp.bin";
    save_features((std::filesystem::path(out_dir) / rec.cbp_path).string(), cbp);
    save_features((std::filesystem::path(out_dir) / rec.vlp_path).string(), vlp);
    m.videos.push_back(std::move(rec));
  }

  save_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), m);
  return m;
}

}  // namespace wtal
