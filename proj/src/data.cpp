#include "wtal/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "wtal/binio.hpp"
#include "wtal/errors.hpp"

namespace wtal {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kFeatureMagic[] = "WTALFEAT";  // 8 bytes, no terminator stored
constexpr std::uint8_t kFeatureVersion = 1;
constexpr const char* kManifestFormat = "wtal-manifest-v1";

std::string join_path(const std::string& base, const std::string& rel) {
  return (std::filesystem::path(base) / rel).string();
}

// Header-only peek used by manifest validation.
struct FeatureHeader {
  int t = 0, d = 0;
};

FeatureHeader read_feature_header(const std::string& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path);
  if (r.raw(8, "magic") != std::string(kFeatureMagic, 8))
    throw FormatError(path + ": bad magic, not a feature file");
  const auto version = r.u8("version");
  if (version != kFeatureVersion)
    throw FormatError(path + ": unsupported feature version " +
                      std::to_string(version));
  FeatureHeader h;
  h.t = static_cast<int>(r.u32("frame count"));
  h.d = static_cast<int>(r.u32("feature width"));
  return h;
}

int require_int(const ordered_json& j, const char* key,
                const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer())
    throw DataError(ctx + ": missing or non-integer field '" + key + "'");
  return it->get<int>();
}

double require_number(const ordered_json& j, const char* key,
                      const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw DataError(ctx + ": missing or non-numeric field '" + key + "'");
  return it->get<double>();
}

std::string require_string(const ordered_json& j, const char* key,
                           const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw DataError(ctx + ": missing or non-string field '" + key + "'");
  return it->get<std::string>();
}

std::vector<double> parse_prototype_rows(const ordered_json& rows, int count,
                                         int width, const std::string& ctx) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != count)
    throw DataError(ctx + ": expected " + std::to_string(count) +
                    " prototype rows");
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(count) * width);
  for (const auto& row : rows) {
    if (!row.is_array() || static_cast<int>(row.size()) != width)
      throw DataError(ctx + ": prototype row width must be " +
                      std::to_string(width));
    for (const auto& v : row) {
      if (!v.is_number()) throw DataError(ctx + ": non-numeric prototype entry");
      flat.push_back(v.get<double>());
    }
  }
  return flat;
}

ordered_json prototype_rows_json(const std::vector<double>& flat, int count,
                                 int width) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < count; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < width; ++j)
      row.push_back(flat[static_cast<std::size_t>(i) * width + j]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (videos[i].rec.split == split) out.push_back(static_cast<int>(i));
  return out;
}

FeatureTensor load_features(const std::string& path, Stream stream) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path);
  if (r.raw(8, "magic") != std::string(kFeatureMagic, 8))
    throw FormatError(path + ": bad magic, not a feature file");
  const auto version = r.u8("version");
  if (version != kFeatureVersion)
    throw FormatError(path + ": unsupported feature version " +
                      std::to_string(version));
  FeatureTensor f;
  f.stream = stream;
  f.t = static_cast<int>(r.u32("frame count"));
  f.d = static_cast<int>(r.u32("feature width"));
  if (f.t <= 0 || f.d <= 0)
    throw FormatError(path + ": non-positive dimensions in header");
  const std::size_t n = static_cast<std::size_t>(f.t) * f.d;
  if (r.remaining() != 8 * n)
    throw FormatError(path + ": payload length does not match header (" +
                      std::to_string(r.remaining()) + " bytes for " +
                      std::to_string(n) + " values)");
  f.values.resize(n);
  r.f64_array(f.values.data(), n, "payload");
  for (double v : f.values)
    if (!std::isfinite(v))
      throw FormatError(path + ": non-finite value in payload");
  return f;
}

void save_features(const std::string& path, const FeatureTensor& features) {
  if (features.t <= 0 || features.d <= 0 ||
      features.values.size() !=
          static_cast<std::size_t>(features.t) * features.d)
    throw DimensionError("save_features: inconsistent tensor dimensions");
  std::string out;
  out.append(kFeatureMagic, 8);
  io::put_u8(out, kFeatureVersion);
  io::put_u32(out, static_cast<std::uint32_t>(features.t));
  io::put_u32(out, static_cast<std::uint32_t>(features.d));
  for (double v : features.values) io::put_f64(out, v);
  io::write_file(path, out);
}

Manifest load_manifest(const std::string& path) {
  const std::string text = io::read_file(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": manifest is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw DataError(path + ": manifest root must be an object");
  if (require_string(j, "format", path) != kManifestFormat)
    throw DataError(path + ": unsupported manifest format tag");

  Manifest m;
  m.num_classes = require_int(j, "num_classes", path);
  m.feature_dim = require_int(j, "feature_dim", path);
  if (m.num_classes < 1 || m.feature_dim < 1)
    throw DataError(path + ": num_classes and feature_dim must be positive");
  m.fps = require_number(j, "fps", path);
  auto seed_it = j.find("text_seed");
  if (seed_it == j.end() || !seed_it->is_number_unsigned())
    throw DataError(path + ": missing or invalid field 'text_seed'");
  m.text_seed = seed_it->get<std::uint64_t>();

  auto names_it = j.find("class_names");
  if (names_it == j.end() || !names_it->is_array() ||
      static_cast<int>(names_it->size()) != m.num_classes)
    throw DataError(path + ": class_names must list one name per class");
  for (const auto& n : *names_it) {
    if (!n.is_string()) throw DataError(path + ": class names must be strings");
    m.class_names.push_back(n.get<std::string>());
  }

  auto protos_it = j.find("prototypes");
  if (protos_it == j.end() || !protos_it->is_object())
    throw DataError(path + ": missing prototypes object");
  m.cbp_prototypes = parse_prototype_rows((*protos_it)["cbp"],
                                          m.num_classes + 1,
                                          2 * m.feature_dim, path);
  m.vlp_prototypes = parse_prototype_rows((*protos_it)["vlp"],
                                          m.num_classes + 1, m.feature_dim,
                                          path);

  auto videos_it = j.find("videos");
  if (videos_it == j.end() || !videos_it->is_array())
    throw DataError(path + ": missing videos array");
  const std::string base = std::filesystem::path(path).parent_path().string();
  std::set<std::string> seen_ids;
  for (const auto& vj : *videos_it) {
    VideoRecord rec;
    rec.video_id = require_string(vj, "video_id", path);
    const std::string ctx = path + ": video '" + rec.video_id + "'";
    if (!seen_ids.insert(rec.video_id).second)
      throw DataError(ctx + ": duplicate video_id");
    rec.split = require_string(vj, "split", ctx);
    if (rec.split != "train" && rec.split != "test")
      throw DataError(ctx + ": split must be 'train' or 'test'");
    rec.t = require_int(vj, "num_frames", ctx);
    if (rec.t < 1) throw DataError(ctx + ": num_frames must be positive");

    rec.labels.assign(m.num_classes, 0);
    auto labels_it = vj.find("labels");
    if (labels_it == vj.end() || !labels_it->is_array())
      throw DataError(ctx + ": missing labels array");
    for (const auto& l : *labels_it) {
      if (!l.is_number_integer())
        throw DataError(ctx + ": labels must be class ids");
      const int cls = l.get<int>();
      if (cls < 0 || cls >= m.num_classes)
        throw DataError(ctx + ": label " + std::to_string(cls) +
                        " out of range");
      rec.labels[cls] = 1;
    }
    if (rec.split == "train" &&
        std::count(rec.labels.begin(), rec.labels.end(), 1) == 0)
      throw DataError(ctx + ": training video needs at least one label");

    auto segs_it = vj.find("segments");
    if (segs_it != vj.end()) {
      if (!segs_it->is_array()) throw DataError(ctx + ": segments must be an array");
      for (const auto& sj : *segs_it) {
        if (!sj.is_array() || sj.size() != 3)
          throw DataError(ctx + ": segment entries must be [start, end, class]");
        GroundTruthSegment s;
        s.start = sj[0].get<int>();
        s.end = sj[1].get<int>();
        s.category = sj[2].get<int>();
        if (s.start < 0 || s.start > s.end)
          throw DataError(ctx + ": segment start/end out of order");
        if (s.end >= rec.t)
          throw DataError(ctx + ": segment end " + std::to_string(s.end) +
                          " outside the video (T=" + std::to_string(rec.t) + ")");
        if (s.category < 0 || s.category >= m.num_classes)
          throw DataError(ctx + ": segment class out of range");
        rec.segments.push_back(s);
      }
    }

    auto feat_it = vj.find("features");
    if (feat_it == vj.end() || !feat_it->is_object())
      throw DataError(ctx + ": missing features object");
    rec.cbp_path = require_string(*feat_it, "cbp", ctx);
    rec.vlp_path = require_string(*feat_it, "vlp", ctx);
    for (const auto& [rel, width] :
         {std::pair{rec.cbp_path, 2 * m.feature_dim},
          std::pair{rec.vlp_path, m.feature_dim}}) {
      const std::string full = join_path(base, rel);
      if (!std::filesystem::exists(full))
        throw DataError(ctx + ": missing feature file " + rel);
      const auto header = read_feature_header(full);
      if (header.t != rec.t)
        throw DataError(ctx + ": feature file " + rel + " has T=" +
                        std::to_string(header.t) + ", manifest says " +
                        std::to_string(rec.t));
      if (header.d != width)
        throw DataError(ctx + ": feature file " + rel + " has width " +
                        std::to_string(header.d) + ", expected " +
                        std::to_string(width));
    }
    m.videos.push_back(std::move(rec));
  }

  std::sort(m.videos.begin(), m.videos.end(),
            [](const VideoRecord& a, const VideoRecord& b) {
              return a.video_id < b.video_id;
            });
  return m;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  ordered_json j = ordered_json::object();
  j["format"] = kManifestFormat;
  j["num_classes"] = manifest.num_classes;
  j["feature_dim"] = manifest.feature_dim;
  j["fps"] = manifest.fps;
  j["text_seed"] = manifest.text_seed;
  j["class_names"] = manifest.class_names;
  j["prototypes"] = ordered_json::object();
  j["prototypes"]["cbp"] = prototype_rows_json(
      manifest.cbp_prototypes, manifest.num_classes + 1,
      2 * manifest.feature_dim);
  j["prototypes"]["vlp"] = prototype_rows_json(
      manifest.vlp_prototypes, manifest.num_classes + 1, manifest.feature_dim);

  ordered_json videos = ordered_json::array();
  auto sorted = manifest.videos;
  std::sort(sorted.begin(), sorted.end(),
            [](const VideoRecord& a, const VideoRecord& b) {
              return a.video_id < b.video_id;
            });
  for (const auto& rec : sorted) {
    ordered_json vj = ordered_json::object();
    vj["video_id"] = rec.video_id;
    vj["split"] = rec.split;
    vj["num_frames"] = rec.t;
    ordered_json labels = ordered_json::array();
    for (int c = 0; c < static_cast<int>(rec.labels.size()); ++c)
      if (rec.labels[c]) labels.push_back(c);
    vj["labels"] = std::move(labels);
    vj["features"] = {{"cbp", rec.cbp_path}, {"vlp", rec.vlp_path}};
    ordered_json segs = ordered_json::array();
    for (const auto& s : rec.segments)
      segs.push_back(ordered_json::array({s.start, s.end, s.category}));
    vj["segments"] = std::move(segs);
    videos.push_back(std::move(vj));
  }
  j["videos"] = std::move(videos);
  io::write_file(path, j.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = join_path(dir, "manifest.json");
  Dataset ds;
  ds.data_hash = io::fnv1a64(io::read_file(manifest_path));
  ds.manifest = load_manifest(manifest_path);
  ds.videos.reserve(ds.manifest.videos.size());
  for (const auto& rec : ds.manifest.videos) {
    LoadedVideo v;
    v.rec = rec;
    v.cbp = load_features(join_path(dir, rec.cbp_path), Stream::Cbp);
    v.vlp = load_features(join_path(dir, rec.vlp_path), Stream::Vlp);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

LoadedVideo sample_snippets(const LoadedVideo& video, int t_sample, Rng& rng) {
  if (t_sample < 1) throw ParameterError("sample_snippets: t_sample must be positive");
  const int t = video.rec.t;
  if (t <= t_sample) return video;  // shorter videos are used whole

  const int start = rng.uniform_int(0, t - t_sample);
  const int last = start + t_sample - 1;

  LoadedVideo out;
  out.rec = video.rec;
  out.rec.t = t_sample;
  out.rec.segments.clear();
  for (const auto& s : video.rec.segments) {
    const int cs = std::max(s.start, start);
    const int ce = std::min(s.end, last);
    if (cs > ce) continue;  // fully outside the window
    out.rec.segments.push_back({cs - start, ce - start, s.category});
  }

  auto crop = [&](const FeatureTensor& f) {
    FeatureTensor c;
    c.stream = f.stream;
    c.t = t_sample;
    c.d = f.d;
    c.values.assign(f.values.begin() + static_cast<std::size_t>(start) * f.d,
                    f.values.begin() + static_cast<std::size_t>(start + t_sample) * f.d);
    return c;
  };
  out.cbp = crop(video.cbp);
  out.vlp = crop(video.vlp);
  return out;
}

}  // namespace wtal
