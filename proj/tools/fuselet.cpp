// fuselet command-line driver. Subcommands map 1:1 onto pipeline stages,
// plus run-all; see README.md for the config format and a worked example.
//
// Exit codes: 0 success, 2 configuration error (bad flags, bad config file),
// 3 data error (missing/corrupt inputs), 4 numeric failure during training.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fuselet/config.hpp"
#include "fuselet/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  bool force = false;
  int threads = 1;
  long long seed = -1;  // <0 = keep configured seeds
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "pipeline config (TOML)")
      ->required();
  cmd->add_flag("--force", args.force, "re-run even when outputs are current");
  cmd->add_option("--threads", args.threads, "worker threads (results are identical for any value)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", args.seed, "override the configured base seed")
      ->check(CLI::NonNegativeNumber);
}

fuselet::PipelineRunner make_runner(const CommonArgs& args) {
  fuselet::PipelineConfig cfg = fuselet::load_pipeline_config(args.config_path);
  if (const char* env_out = std::getenv("FUSELET_OUT");
      env_out != nullptr && *env_out != '\0')
    cfg.output_dir = env_out;
  if (args.seed >= 0)
    fuselet::apply_seed_override(cfg, static_cast<std::uint64_t>(args.seed));
  fuselet::RunOptions opts;
  opts.force = args.force;
  opts.threads = args.threads;
  return fuselet::PipelineRunner(std::move(cfg), opts);
}

void report(const fuselet::StageResult& r) {
  if (r.skipped)
    std::printf("[%s] up-to-date\n", r.stage.c_str());
  else
    std::printf("[%s] done (%.2fs)\n", r.stage.c_str(), r.seconds);
  std::fflush(stdout);
}

void print_report_if_evaluated(const fuselet::PipelineRunner& runner,
                               const std::string& stage) {
  if (stage != "evaluate") return;
  try {
    std::string text = fuselet::read_text_file(runner.report_text_path());
    std::fputs(text.c_str(), stdout);
  } catch (const fuselet::DataError&) {
    // report missing would already have failed the stage; ignore here
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised raster segmentation pipeline"};
  app.require_subcommand(1);

  std::vector<std::string> stage_names = fuselet::pipeline_stages();
  stage_names.push_back("run-all");

  std::map<std::string, CommonArgs> args;
  for (const std::string& name : stage_names) {
    std::string desc = name == "run-all"
                           ? "run every stage in order"
                           : "run the '" + name + "' stage";
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd, args[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0; any parse failure is 2
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    fuselet::PipelineRunner runner = make_runner(args[stage]);
    if (stage == "run-all") {
      for (const fuselet::StageResult& r : runner.run_all()) report(r);
      print_report_if_evaluated(runner, "evaluate");
    } else {
      report(runner.run(stage));
      print_report_if_evaluated(runner, stage);
    }
    return 0;
  } catch (const fuselet::ConfigError& e) {
    std::fprintf(stderr, "fuselet: config error: %s\n", e.what());
    return 2;
  } catch (const fuselet::DataError& e) {
    std::fprintf(stderr, "fuselet: data error: %s\n", e.what());
    return 3;
  } catch (const fuselet::NumericError& e) {
    std::fprintf(stderr, "fuselet: numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fuselet: error: %s\n", e.what());
    return 3;
  }
}
