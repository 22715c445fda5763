#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wtal/binio.hpp"
#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/inference.hpp"
#include "wtal/synth.hpp"

// End-to-end tests that drive the installed binary the way a user would.
// WTAL_BIN_PATH is injected by the build so the suite always tests the
// executable it was built next to.

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::mt19937_64 rng(std::random_device{}());
    path = fs::temp_directory_path() /
           ("wtal_cli_" + std::to_string(rng()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string read_or_empty(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

CmdResult run_cli(const std::string& args) {
  static int serial = 0;
  const fs::path out = fs::temp_directory_path() /
                       ("wtal_cli_out_" + std::to_string(++serial));
  const fs::path err = out.string() + ".err";
  const std::string cmd = std::string("\"") + WTAL_BIN_PATH + "\" " + args +
                          " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_or_empty(out);
  r.err = read_or_empty(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

const char* kTinySpec = R"({
  "seed": 4242, "num_videos": 10, "num_classes": 4, "feature_dim": 6,
  "t_min": 40, "t_max": 56, "segments_min": 1, "segments_max": 2,
  "seg_len_min": 10, "seg_len_max": 14, "min_gap": 3, "noise_std": 0.05
})";

const char* kTinyConfig = R"({
  "num_classes": 4, "feature_dim": 6, "t_sample": 32, "d_model": 16,
  "tf_layers": 1, "tf_heads": 2, "prompt_count": 2, "lr": 0.001,
  "warmup_iters": 6, "cycles": 1, "step_iters": 4
})";

// One generated dataset and one trained run shared by the read-only cases.
struct Env {
  TempDir dir;
  fs::path spec_path, cfg_path, data_dir, run_dir, report_path;

  Env() {
    spec_path = dir.path / "spec.json";
    cfg_path = dir.path / "cfg.json";
    data_dir = dir.path / "data";
    run_dir = dir.path / "run";
    report_path = dir.path / "report.json";
    wtal::io::write_file(spec_path.string(), kTinySpec);
    wtal::io::write_file(cfg_path.string(), kTinyConfig);

    auto gen = run_cli("gen-data --spec " + spec_path.string() + " --out " +
                       data_dir.string());
    REQUIRE(gen.code == 0);
    auto train = run_cli("train --config " + cfg_path.string() + " --data " +
                         data_dir.string() + " --out " + run_dir.string());
    REQUIRE(train.code == 0);
    // the fingerprint covers the full config, paths included, so evaluation
    // runs against the config the training run wrote next to its checkpoint
    auto eval = run_cli("eval " + run_args() + " --ckpt " +
                        (run_dir / "checkpoint.bin").string() + " --out " +
                        report_path.string());
    REQUIRE(eval.code == 0);
  }

  std::string base_args() const {
    return "--config " + cfg_path.string() + " --data " + data_dir.string();
  }

  std::string run_args() const {
    return "--config " + (run_dir / "config.json").string();
  }
};

const Env& env() {
  static Env e;
  return e;
}

std::map<std::string, std::string> dir_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      files[fs::relative(entry.path(), root).string()] =
          read_or_empty(entry.path());
  return files;
}

std::vector<nlohmann::json> history_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

}  // namespace

TEST_CASE("help lists the subcommands and exits clean") {
  auto r = run_cli("--help");
  CHECK(r.code == 0);
  for (const char* name : {"gen-data", "warmup", "train", "eval", "infer",
                           "report"})
    CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("usage problems exit with the parameter error code") {
  CHECK(run_cli("").code == 1);                 // a subcommand is required
  CHECK(run_cli("no-such-command").code == 1);
  CHECK(run_cli("train").code == 1);            // --config is required
  CHECK(run_cli("eval --config x.json").code == 1);

  // config problems behind valid syntax: missing data dir, bad override,
  // unknown field, value rejected by validation
  const auto& e = env();
  CHECK(run_cli("train --config " + e.cfg_path.string()).code == 1);
  CHECK(run_cli("train " + e.base_args() + " --set bogus").code == 1);
  CHECK(run_cli("train " + e.base_args() + " --set no_such_key=1").code == 1);
  auto bad = run_cli("train " + e.base_args() + " --set tau=0");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("tau") != std::string::npos);
}

TEST_CASE("gen-data writes a loadable dataset deterministically") {
  const auto& e = env();
  const wtal::Dataset data = wtal::load_dataset(e.data_dir.string());
  CHECK(data.manifest.videos.size() == 10);
  CHECK(data.manifest.num_classes == 4);
  CHECK(data.manifest.feature_dim == 6);

  TempDir scratch;
  const fs::path again = scratch.path / "again";
  auto r = run_cli("gen-data --spec " + e.spec_path.string() + " --out " +
                   again.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 10 videos") != std::string::npos);
  CHECK(dir_bytes(again) == dir_bytes(e.data_dir));
}

TEST_CASE("gen-data print-spec echoes the effective generator settings") {
  auto defaults = run_cli("gen-data --print-spec");
  CHECK(defaults.code == 0);
  CHECK(defaults.out == wtal::synth_spec_text(wtal::SynthSpec{}));

  const auto& e = env();
  auto tiny = run_cli("gen-data --print-spec --spec " + e.spec_path.string());
  CHECK(tiny.code == 0);
  CHECK(tiny.out ==
        wtal::synth_spec_text(wtal::load_synth_spec(e.spec_path.string())));

  auto missing = run_cli("gen-data --spec " + e.spec_path.string());
  CHECK(missing.code == 1);
  CHECK(missing.err.find("--out") != std::string::npos);
}

TEST_CASE("train writes config, history, and checkpoint artifacts") {
  const auto& e = env();
  const std::string cfg_bytes =
      wtal::io::read_file((e.run_dir / "config.json").string());
  const wtal::ExperimentConfig cfg = wtal::parse_config(cfg_bytes);
  CHECK(wtal::canonical_text(cfg) == cfg_bytes);  // canonical fixed point
  CHECK(cfg.data_dir == e.data_dir.string());
  CHECK(cfg.out_dir == e.run_dir.string());

  const auto rows = history_rows(e.run_dir / "history.jsonl");
  REQUIRE(rows.size() == 14);  // 6 warmup + 1 cycle of 4 B and 4 F
  CHECK(rows.front()["phase"] == "warmup");
  CHECK(rows[6]["phase"] == "b1");
  CHECK(rows.back()["phase"] == "f1");

  CHECK(fs::file_size(e.run_dir / "checkpoint.bin") > 0);
}

TEST_CASE("train rejects a config that does not match the dataset") {
  const auto& e = env();
  auto r = run_cli("train " + e.base_args() + " --set num_classes=8");
  CHECK(r.code == 1);
  CHECK(r.err.find("classes") != std::string::npos);
}

TEST_CASE("a broken dataset directory exits with the data error code") {
  const auto& e = env();
  auto r = run_cli("train --config " + e.cfg_path.string() +
                   " --data /nonexistent/dataset --out /tmp/never");
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("numeric divergence exits with the numeric error code") {
  const auto& e = env();
  TempDir scratch;
  auto r = run_cli("train " + e.base_args() + " --out " +
                   (scratch.path / "run").string() + " --set lr=1e300");
  CHECK(r.code == 3);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("training artifacts are byte-identical across reruns") {
  const auto& e = env();
  TempDir scratch;
  const fs::path out = scratch.path / "run";
  const std::string cmd =
      "train " + e.base_args() + " --out " + out.string();
  REQUIRE(run_cli(cmd).code == 0);
  const auto first = dir_bytes(out);
  fs::remove_all(out);
  REQUIRE(run_cli(cmd).code == 0);
  CHECK(first == dir_bytes(out));
}

TEST_CASE("warmup trains the localization branch only") {
  const auto& e = env();
  TempDir scratch;
  const fs::path out = scratch.path / "warm";
  auto r = run_cli("warmup " + e.base_args() + " --out " + out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("last phase warmup") != std::string::npos);
  const auto rows = history_rows(out / "history.jsonl");
  REQUIRE(rows.size() == 6);
  for (const auto& row : rows) {
    CHECK(row["phase"] == "warmup");
    CHECK(row["loss_kd"] == 0.0);
    CHECK(row["loss_fb"] == 0.0);
  }
}

TEST_CASE("eval writes a parsable report with the config fingerprint") {
  const auto& e = env();
  const wtal::EvalReport report =
      wtal::parse_report(wtal::io::read_file(e.report_path.string()));
  const wtal::ExperimentConfig cfg = wtal::parse_config(
      wtal::io::read_file((e.run_dir / "config.json").string()));
  CHECK(report.config_hash == wtal::config_hash(cfg));
  CHECK(report.per_iou.size() == 7);
  CHECK(report.videos.size() == 3);  // 10 videos at train_fraction 0.7

  // rerunning the evaluation reproduces the report byte for byte
  TempDir scratch;
  const fs::path again = scratch.path / "again.json";
  auto r = run_cli("eval " + e.run_args() + " --ckpt " +
                   (e.run_dir / "checkpoint.bin").string() + " --out " +
                   again.string());
  CHECK(r.code == 0);
  CHECK(read_or_empty(again) == read_or_empty(e.report_path));
}

TEST_CASE("eval enforces checkpoint fingerprints unless forced") {
  const auto& e = env();
  TempDir scratch;
  const fs::path out = scratch.path / "r.json";
  const std::string base = "eval " + e.run_args() + " --ckpt " +
                           (e.run_dir / "checkpoint.bin").string() + " --out " +
                           out.string() + " --set seed=123";
  auto refused = run_cli(base);
  CHECK(refused.code == 2);
  CHECK(refused.err.find("--force") != std::string::npos);
  CHECK(!fs::exists(out));

  auto forced = run_cli(base + " --force");
  CHECK(forced.code == 0);
  CHECK(forced.err.find("fingerprint") != std::string::npos);
  CHECK(fs::exists(out));
}

TEST_CASE("infer prints proposals for the test split") {
  const auto& e = env();
  const std::string base = "infer " + e.run_args() + " --ckpt " +
                           (e.run_dir / "checkpoint.bin").string();
  auto all = run_cli(base);
  REQUIRE(all.code == 0);
  const auto parsed = nlohmann::json::parse(all.out);
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == 3);
  for (const auto& entry : parsed) {
    CHECK(entry.contains("video_id"));
    CHECK(entry["proposals"].is_array());
    for (const auto& p : entry["proposals"]) {
      REQUIRE(p.size() == 4);  // [start, end, class, score]
      CHECK(p[0].get<int>() <= p[1].get<int>());
    }
  }

  const std::string first = parsed[0]["video_id"].get<std::string>();
  auto one = run_cli(base + " --video " + first);
  REQUIRE(one.code == 0);
  const auto single = nlohmann::json::parse(one.out);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == parsed[0]);

  auto missing = run_cli(base + " --video no_such_video");
  CHECK(missing.code == 2);
  CHECK(missing.err.find("no_such_video") != std::string::npos);
}

TEST_CASE("report tabulates named evaluation reports") {
  const auto& e = env();
  TempDir scratch;
  const fs::path a = scratch.path / "baseline.json";
  const fs::path b = scratch.path / "candidate.json";
  fs::copy_file(e.report_path, a);
  fs::copy_file(e.report_path, b);
  auto r = run_cli("report " + b.string() + " " + a.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("avg[0.1:0.5]") != std::string::npos);
  CHECK(r.out.find("baseline") != std::string::npos);
  CHECK(r.out.find("candidate") != std::string::npos);
  CHECK(r.out.find("baseline") < r.out.find("candidate"));  // sorted rows

  const fs::path junk = scratch.path / "junk.json";
  wtal::io::write_file(junk.string(), "not a report");
  CHECK(run_cli("report " + junk.string()).code == 2);
  CHECK(run_cli("report").code == 1);  // at least one path required
}
