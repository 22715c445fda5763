#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include "wtal/binio.hpp"
#include "wtal/data.hpp"
#include "wtal/errors.hpp"
#include "wtal/synth.hpp"

using namespace wtal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("wtal_synth_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SynthSpec small_spec() {
  SynthSpec s;
  s.seed = 7;
  s.num_videos = 6;
  s.num_classes = 3;
  s.feature_dim = 8;
  s.t_min = 60;
  s.t_max = 80;
  s.segments_min = 1;
  s.segments_max = 2;
  s.seg_len_min = 10;
  s.seg_len_max = 14;
  s.vlp_bleed = 5;
  return s;
}

int min_distance_to_segment(const VideoRecord& rec, int t, int category) {
  int best = 1 << 30;
  for (const auto& s : rec.segments) {
    if (s.category != category) continue;
    int d = 0;
    if (t < s.start) d = s.start - t;
    else if (t > s.end) d = t - s.end;
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

TEST_CASE("generator spec round trips through JSON") {
  SynthSpec s;
  s.seed = 123;
  s.num_videos = 10;
  s.noise_std = 0.5;
  s.peak_fraction = 0.25;
  const SynthSpec r = parse_synth_spec(synth_spec_text(s));
  CHECK(r.seed == 123);
  CHECK(r.num_videos == 10);
  CHECK(r.noise_std == 0.5);
  CHECK(r.peak_fraction == 0.25);
  CHECK(r.num_classes == s.num_classes);
  CHECK(r.vlp_bleed == s.vlp_bleed);

  // Omitted fields keep their defaults.
  const SynthSpec d = parse_synth_spec("{\"num_videos\": 4}");
  CHECK(d.num_videos == 4);
  CHECK(d.num_classes == SynthSpec{}.num_classes);
}

TEST_CASE("generator spec rejects malformed input") {
  CHECK_THROWS_AS(parse_synth_spec("not json"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("[1,2]"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"bogus\": 1}"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"num_videos\": \"ten\"}"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"num_videos\": 1}"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"t_min\": 50, \"t_max\": 20}"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"num_classes\": 30}"), ParameterError);
  CHECK_THROWS_AS(parse_synth_spec("{\"train_fraction\": 1.0}"), ParameterError);
  CHECK_THROWS_AS(load_synth_spec("/no/such/spec.json"), ParameterError);
}

TEST_CASE("generation is deterministic in the seed") {
  TempDir a, b, c;
  SynthSpec s = small_spec();
  generate(s, a.path.string());
  generate(s, b.path.string());
  s.seed = 8;
  generate(s, c.path.string());

  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.path))
    names.insert(entry.path().filename().string());
  CHECK(names.count("manifest.json") == 1);
  CHECK(names.size() == 1 + 2 * 6);

  bool any_differs_across_seeds = false;
  for (const auto& name : names) {
    const std::string bytes_a = io::read_file((a.path / name).string());
    CHECK(bytes_a == io::read_file((b.path / name).string()));
    if (bytes_a != io::read_file((c.path / name).string()))
      any_differs_across_seeds = true;
  }
  CHECK(any_differs_across_seeds);
}

TEST_CASE("planted segments respect packing rules and weak labels") {
  TempDir dir;
  const SynthSpec s;  // full-size defaults
  generate(s, dir.path.string());
  const Dataset ds = load_dataset(dir.path.string());

  CHECK(static_cast<int>(ds.videos.size()) == s.num_videos);
  const int n_train = static_cast<int>(ds.split_indices("train").size());
  const int n_test = static_cast<int>(ds.split_indices("test").size());
  CHECK(n_train == 42);
  CHECK(n_test == 18);

  std::set<int> test_classes;
  for (const auto& v : ds.videos) {
    const auto& rec = v.rec;
    REQUIRE(!rec.segments.empty());
    std::vector<int> from_segments(s.num_classes, 0);
    for (std::size_t i = 0; i < rec.segments.size(); ++i) {
      const auto& seg = rec.segments[i];
      CHECK(seg.start >= 0);
      CHECK(seg.start <= seg.end);
      CHECK(seg.end < rec.t);
      CHECK(seg.length() >= s.seg_len_min);
      CHECK(seg.length() <= s.seg_len_max);
      from_segments[seg.category] = 1;
      if (i > 0)
        CHECK(seg.start - rec.segments[i - 1].end - 1 >= s.min_gap);
      if (rec.split == "test") test_classes.insert(seg.category);
    }
    // Weak video labels are exactly the classes that own a segment.
    CHECK(rec.labels == from_segments);
  }
  CHECK(static_cast<int>(test_classes.size()) == s.num_classes);
}

TEST_CASE("noiseless features reproduce the planted structure exactly") {
  TempDir dir;
  SynthSpec s = small_spec();
  s.noise_std = 0.0;
  generate(s, dir.path.string());
  const Dataset ds = load_dataset(dir.path.string());
  const int c = s.num_classes;

  for (const auto& v : ds.videos) {
    const auto vlp_labels =
        nearest_prototype_labels(v.vlp, ds.manifest.vlp_prototypes, c + 1);
    const auto cbp_labels =
        nearest_prototype_labels(v.cbp, ds.manifest.cbp_prototypes, c + 1);

    std::vector<int> seg_class(v.rec.t, -1);
    for (const auto& seg : v.rec.segments)
      for (int t = seg.start; t <= seg.end; ++t) seg_class[t] = seg.category;

    std::vector<int> peak_count(v.rec.segments.size(), 0);
    for (int t = 0; t < v.rec.t; ++t) {
      if (seg_class[t] >= 0) {
        // Complete stream: every action frame reads as its class.
        CHECK(vlp_labels[t] == seg_class[t]);
        // Precise stream: action frames read as the class only on peaks.
        CHECK((cbp_labels[t] == seg_class[t] || cbp_labels[t] == c));
        for (std::size_t i = 0; i < v.rec.segments.size(); ++i)
          if (cbp_labels[t] == v.rec.segments[i].category &&
              t >= v.rec.segments[i].start && t <= v.rec.segments[i].end)
            ++peak_count[i];
      } else {
        // The precise stream never fires on background.
        CHECK(cbp_labels[t] == c);
        if (vlp_labels[t] != c) {
          // Leaky stream halo: must sit within bleed range of a matching
          // segment, and never beyond it.
          CHECK(min_distance_to_segment(v.rec, t, vlp_labels[t]) <= s.vlp_bleed);
        } else {
          // Far background is clean in both streams.
          bool near_any = false;
          for (const auto& seg : v.rec.segments)
            if (min_distance_to_segment(v.rec, t, seg.category) <= s.vlp_bleed)
              near_any = true;
          if (!near_any) CHECK(vlp_labels[t] == c);
        }
      }
    }
    for (std::size_t i = 0; i < v.rec.segments.size(); ++i) {
      const int len = v.rec.segments[i].length();
      const int expect =
          std::max(1, static_cast<int>(std::lround(s.peak_fraction * len)));
      CHECK(peak_count[i] == expect);
    }
  }
}

TEST_CASE("streams fail in opposite directions") {
  TempDir dir;
  const SynthSpec s;  // defaults, including noise
  generate(s, dir.path.string());
  const Dataset ds = load_dataset(dir.path.string());
  const int c = s.num_classes;

  long fore_total = 0, back_total = 0;
  long cbp_fore_hit = 0, vlp_fore_hit = 0;
  long cbp_back_hit = 0, vlp_back_hit = 0;
  for (const auto& v : ds.videos) {
    const auto vl = nearest_prototype_labels(v.vlp, ds.manifest.vlp_prototypes, c + 1);
    const auto cl = nearest_prototype_labels(v.cbp, ds.manifest.cbp_prototypes, c + 1);
    std::vector<bool> fore(v.rec.t, false);
    for (const auto& seg : v.rec.segments)
      for (int t = seg.start; t <= seg.end; ++t) fore[t] = true;
    for (int t = 0; t < v.rec.t; ++t) {
      if (fore[t]) {
        ++fore_total;
        if (cl[t] != c) ++cbp_fore_hit;
        if (vl[t] != c) ++vlp_fore_hit;
      } else {
        ++back_total;
        if (cl[t] == c) ++cbp_back_hit;
        if (vl[t] == c) ++vlp_back_hit;
      }
    }
  }
  REQUIRE(fore_total > 0);
  REQUIRE(back_total > 0);
  // The leaky stream covers more foreground; the precise stream keeps more
  // background clean. Direction only, magnitudes belong to calibration.
  CHECK(vlp_fore_hit > cbp_fore_hit);
  CHECK(cbp_back_hit > vlp_back_hit);
  // Sanity: both streams are far from degenerate.
  CHECK(vlp_fore_hit > fore_total * 3 / 4);
  CHECK(cbp_back_hit > back_total * 3 / 4);
}

TEST_CASE("impossible packing requests raise a generation error") {
  TempDir dir;
  SynthSpec s = small_spec();
  s.t_min = 30;
  s.t_max = 30;
  s.segments_min = 3;
  s.segments_max = 3;
  s.seg_len_min = 20;
  s.seg_len_max = 20;
  CHECK_THROWS_AS(generate(s, dir.path.string()), GenerationError);
}

TEST_CASE("nearest prototype labels break ties toward the lowest row") {
  FeatureTensor f;
  f.stream = Stream::Vlp;
  f.t = 3;
  f.d = 2;
  f.values = {1.0, 0.0,   // exactly row 0
              0.0, 2.0,   // exactly row 1, scale must not matter
              1.0, 1.0};  // equidistant: lowest index wins
  const std::vector<double> bank = {1.0, 0.0, 0.0, 1.0};
  const auto labels = nearest_prototype_labels(f, bank, 2);
  CHECK(labels == std::vector<int>{0, 1, 0});

  CHECK_THROWS_AS(nearest_prototype_labels(f, bank, 3), DimensionError);
}
