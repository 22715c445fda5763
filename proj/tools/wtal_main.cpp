#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wtal/binio.hpp"
#include "wtal/config.hpp"
#include "wtal/data.hpp"
#include "wtal/errors.hpp"
#include "wtal/inference.hpp"
#include "wtal/pipeline.hpp"
#include "wtal/synth.hpp"
#include "wtal/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct RunFlags {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string ckpt_path;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_config_flags(CLI::App* cmd, RunFlags& flags, bool needs_out) {
  cmd->add_option("--config", flags.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--data", flags.data_dir, "dataset directory");
  if (needs_out)
    cmd->add_option("--out", flags.out_dir, "output directory for artifacts");
  cmd->add_option("--set", flags.overrides,
                  "config override as key=value (repeatable)");
}

wtal::ExperimentConfig resolve_config(const RunFlags& flags) {
  wtal::ExperimentConfig cfg = wtal::load_config(flags.config_path);
  for (const auto& assignment : flags.overrides)
    wtal::apply_override(cfg, assignment);
  if (!flags.data_dir.empty()) cfg.data_dir = flags.data_dir;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (cfg.data_dir.empty())
    throw wtal::ParameterError("no dataset directory: set --data or data_dir");
  return cfg;
}

wtal::Experiment open_experiment(const wtal::ExperimentConfig& cfg) {
  return wtal::Experiment(cfg, wtal::load_dataset(cfg.data_dir));
}

void write_artifacts(const wtal::Experiment& ex,
                     const std::vector<wtal::HistoryRow>& history) {
  const auto& cfg = ex.cfg();
  if (cfg.out_dir.empty())
    throw wtal::ParameterError("no output directory: set --out or out_dir");
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  wtal::io::write_file((out / "config.json").string(),
                       wtal::canonical_text(cfg));
  wtal::io::write_file((out / "history.jsonl").string(),
                       wtal::history_jsonl(history));
  wtal::save_experiment(ex, (out / "checkpoint.bin").string());
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 bool print_spec) {
  wtal::SynthSpec spec;
  if (!spec_path.empty()) spec = wtal::load_synth_spec(spec_path);
  if (print_spec) {
    std::cout << wtal::synth_spec_text(spec);
    return 0;
  }
  if (out_dir.empty())
    throw wtal::ParameterError("gen-data needs --out");
  const wtal::Manifest manifest = wtal::generate(spec, out_dir);
  std::cout << "wrote " << manifest.videos.size() << " videos ("
            << manifest.num_classes << " classes) to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunFlags& flags, bool warmup_only) {
  wtal::ExperimentConfig cfg = resolve_config(flags);
  if (warmup_only) cfg.baseline = "warmup_only";
  wtal::Experiment ex = open_experiment(cfg);
  const auto history = wtal::run_schedule(ex);
  write_artifacts(ex, history);
  const auto last_phase = history.empty() ? std::string("none")
                                          : history.back().phase;
  std::cout << "trained " << history.size() << " iterations (last phase "
            << last_phase << "), artifacts in " << ex.cfg().out_dir << "\n";
  return 0;
}

int cmd_eval(const RunFlags& flags, const std::string& report_path) {
  const wtal::ExperimentConfig cfg = resolve_config(flags);
  wtal::Experiment ex = open_experiment(cfg);
  wtal::load_experiment(ex, flags.ckpt_path, flags.force);
  if (flags.force)
    std::cerr << "warning: --force skips checkpoint fingerprint checks\n";
  const wtal::EvalReport report = wtal::evaluate_experiment(ex);
  wtal::io::write_file(report_path, wtal::report_json(report));
  std::cout << "avg mAP[0.1:0.5] " << report.avg_lo << ", [0.3:0.7] "
            << report.avg_hi << ", report at " << report_path << "\n";
  return 0;
}

int cmd_infer(const RunFlags& flags, const std::string& video_id) {
  const wtal::ExperimentConfig cfg = resolve_config(flags);
  wtal::Experiment ex = open_experiment(cfg);
  wtal::load_experiment(ex, flags.ckpt_path, flags.force);
  const wtal::EvalReport report = wtal::evaluate_experiment(ex);

  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [id, props] : report.videos) {
    if (!video_id.empty() && id != video_id) continue;
    nlohmann::ordered_json entry;
    entry["video_id"] = id;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& p : props)
      list.push_back({p.start, p.end, p.category, p.score});
    entry["proposals"] = list;
    out.push_back(entry);
  }
  if (!video_id.empty() && out.empty())
    throw wtal::DataError("no test video named '" + video_id + "'");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& paths) {
  std::vector<std::pair<std::string, wtal::EvalReport>> reports;
  for (const auto& path : paths)
    reports.emplace_back(fs::path(path).stem().string(),
                         wtal::parse_report(wtal::io::read_file(path)));
  std::cout << wtal::comparison_table(std::move(reports));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised temporal action localization workbench"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, report_path, video_id;
  bool print_spec = false;
  std::vector<std::string> report_paths;
  RunFlags flags;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "generator spec JSON");
  gen->add_option("--out", out_dir, "dataset output directory");
  gen->add_flag("--print-spec", print_spec,
                "print the effective generator spec and exit");

  auto* warm = app.add_subcommand("warmup", "train the localization branch "
                                            "on video labels only");
  add_config_flags(warm, flags, true);

  auto* train = app.add_subcommand("train", "run the configured schedule");
  add_config_flags(train, flags, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_flags(eval, flags, false);
  eval->add_option("--ckpt", flags.ckpt_path, "checkpoint file")->required();
  eval->add_option("--out", report_path, "report JSON path")->required();
  eval->add_flag("--force", flags.force, "skip checkpoint fingerprint checks");

  auto* infer = app.add_subcommand("infer", "print proposals for test videos");
  add_config_flags(infer, flags, false);
  infer->add_option("--ckpt", flags.ckpt_path, "checkpoint file")->required();
  infer->add_option("--video", video_id, "restrict to one video id");
  infer->add_flag("--force", flags.force, "skip checkpoint fingerprint checks");

  auto* report = app.add_subcommand("report", "tabulate evaluation reports");
  report->add_option("reports", report_paths, "report JSON files")
      ->required()
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help exits clean, usage problems exit 1
  }

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, out_dir, print_spec);
    if (warm->parsed()) return cmd_train(flags, true);
    if (train->parsed()) return cmd_train(flags, false);
    if (eval->parsed()) return cmd_eval(flags, report_path);
    if (infer->parsed()) return cmd_infer(flags, video_id);
    if (report->parsed()) return cmd_report(report_paths);
  } catch (const wtal::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const wtal::NumericError& e) {  // includes TrainingError
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const wtal::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
