#include <CLI11.hpp>

#include <iostream>

#include "headscope/errors.hpp"
#include "headscope/pipeline.hpp"

namespace {

using namespace headscope;

struct CommonArgs {
  std::string config;
  std::string run_dir = "run";
  bool stub_backend = false;
  std::optional<std::uint64_t> seed;
  std::string baseline;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_baseline) {
  cmd->add_option("--config", args.config, "run configuration (key = value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--run-dir", args.run_dir, "run directory")->capture_default_str();
  cmd->add_flag("--stub-backend", args.stub_backend, "answer LLM requests with the offline stub");
  cmd->add_option("--seed", args.seed, "seed for baseline sampling and coin stubs");
  if (with_baseline) cmd->add_option("--baseline", args.baseline, "run directory to compare scores against");
}

std::unique_ptr<Pipeline> open_pipeline(const CommonArgs& args) {
  std::map<std::string, std::string> overrides;
  if (args.stub_backend) overrides["backend"] = "stub";
  if (args.seed) overrides["seed"] = std::to_string(*args.seed);
  PipelineOptions options;
  if (!args.baseline.empty()) options.baseline_run = args.baseline;
  return std::make_unique<Pipeline>(RunConfig::load(args.config, overrides), args.run_dir, options);
}

void print(const StageOutcome& o) {
  std::cout << to_string(o.stage) << ": " << (o.ran ? "done" : "up to date") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headscope: next-token neurons, attention-head attribution and explanation scoring"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (Stage s : kAllStages) {
    auto* cmd = app.add_subcommand(std::string(to_string(s)), "run the " + std::string(to_string(s)) + " stage");
    add_common(cmd, args, s == Stage::Report);
    stage_cmds.emplace_back(cmd, s);
  }
  auto* run_cmd = app.add_subcommand("run", "run every stage in order, skipping completed ones");
  add_common(run_cmd, args, true);

  std::string invalidate_stage;
  auto* invalidate_cmd = app.add_subcommand("invalidate", "mark a stage and every later stage incomplete");
  add_common(invalidate_cmd, args, false);
  invalidate_cmd->add_option("stage", invalidate_stage, "first stage to invalidate")->required();

  std::string toy_dir;
  auto* toy_cmd = app.add_subcommand("make-toy", "write the planted-circuit toy model, corpus and run.conf");
  toy_cmd->add_option("--out", toy_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the exit status of pipeline errors.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (toy_cmd->parsed()) {
      std::cout << write_toy_run(toy_dir).string() << "\n";
      return 0;
    }
    auto pipeline = open_pipeline(args);
    if (run_cmd->parsed()) {
      for (Stage s : kAllStages) print(pipeline->run_stage(s));
    } else if (invalidate_cmd->parsed()) {
      pipeline->invalidate(stage_from_string(invalidate_stage));
      std::cout << "invalidated " << invalidate_stage << " and later stages\n";
    } else {
      for (const auto& [cmd, stage] : stage_cmds) {
        if (cmd->parsed()) print(pipeline->run_stage(stage));
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
