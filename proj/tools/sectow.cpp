// sectow command line: data generation, full runs, evaluation, reports.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sectow/checkpoint.hpp"
#include "sectow/config.hpp"
#include "sectow/dataset_io.hpp"
#include "sectow/orchestrator.hpp"

namespace {

int exit_code(const sectow::Error& e) {
  using sectow::ErrorKind;
  switch (e.kind()) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::JudgeTransient:
    case ErrorKind::JudgeProtocol:
    case ErrorKind::JudgeConfig:
      return 4;
    default:
      return 3;
  }
}

sectow::RunConfig config_for(const std::string& config_path, const std::string& resume_dir) {
  if (!config_path.empty()) return sectow::load_config(config_path);
  return sectow::load_config(std::filesystem::path(resume_dir) / "config.snapshot");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial defender/attacker training in a synthetic jailbreak arena"};
  app.require_subcommand(1);

  std::string config_path, resume_dir, stop_after, defender_path, dataset_path, run_dir;
  bool csv = false;

  auto* gen = app.add_subcommand("gen-data", "Generate seed and probe datasets into the run directory");
  gen->add_option("--config", config_path, "Config file")->required();

  auto* run = app.add_subcommand("run", "Run the full training schedule");
  run->add_option("--config", config_path, "Config file");
  run->add_option("--resume", resume_dir, "Resume an existing run directory");
  run->add_option("--stop-after", stop_after, "Stop after the named sub-step (e.g. iter1.filter)");

  auto* eval = app.add_subcommand("eval", "Evaluate a defender checkpoint on a dataset");
  eval->add_option("--defender", defender_path, "Defender checkpoint")->required();
  eval->add_option("--dataset", dataset_path, "JSONL dataset")->required();
  eval->add_option("--config", config_path, "Config file (temperatures, seed, judge)");

  auto* report = app.add_subcommand("report", "Render the evaluation table of a finished run");
  report->add_option("run_dir", run_dir, "Run directory")->required();
  report->add_flag("--csv", csv, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const auto cfg = sectow::load_config(config_path);
      auto judge = sectow::make_judge(cfg);
      sectow::TugOfWar tow(cfg, cfg.run_dir, *judge);
      tow.run(std::string("data"));
      std::cout << "datasets written to " << tow.layout().data() << "\n";
      return 0;
    }
    if (*run) {
      if (config_path.empty() && resume_dir.empty()) {
        std::cerr << "run needs --config or --resume\n";
        return 2;
      }
      auto cfg = config_for(config_path, resume_dir);
      const std::string dir = resume_dir.empty() ? cfg.run_dir : resume_dir;
      auto judge = sectow::make_judge(cfg);
      sectow::TugOfWar tow(cfg, dir, *judge);
      const auto status = tow.run(stop_after.empty() ? std::nullopt : std::optional<std::string>(stop_after));
      if (status == sectow::RunStatus::Stopped) {
        std::cout << "stopped after " << stop_after << "; resume with --resume " << dir << "\n";
        return 0;
      }
      std::cout << sectow::render_report(dir, false);
      return 0;
    }
    if (*eval) {
      sectow::RunConfig cfg = config_path.empty() ? sectow::RunConfig{} : sectow::load_config(config_path);
      auto judge = sectow::make_judge(cfg);
      const auto vocab = sectow::make_vocabulary(cfg);
      const auto defender = sectow::load_checkpoint(defender_path, sectow::Role::Defender);
      const auto data = sectow::load_dataset(dataset_path);
      const auto jb = sectow::filter(data, true);
      const auto general = sectow::filter(data, false);
      const sectow::EvalOptions opts{cfg.defender_max_len, cfg.temperature_eval};
      nlohmann::json out;
      out["defender"] = defender.version();
      out["samples"] = data.size();
      if (!jb.empty()) {
        sectow::Rng rng(sectow::derive_seed(cfg.seed, "eval-asr"));
        const auto asr = sectow::attack_success_rate(defender, jb, *judge, rng, opts);
        out["asr"] = asr.asr;
        out["resolved"] = asr.resolved;
        out["unresolved"] = asr.unresolved;
      }
      if (!general.empty()) {
        sectow::Rng rng(sectow::derive_seed(cfg.seed, "eval-general"));
        const auto gm = sectow::general_metrics(defender, general, vocab, rng, opts);
        out["orr"] = gm.orr;
        out["acc"] = gm.acc;
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*report) {
      std::cout << sectow::render_report(run_dir, csv);
      return 0;
    }
  } catch (const sectow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
