#include <string>

#include "CLI11.hpp"
#include "cpima/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"causal DAG + multimodal VAE experiment runner"};
  app.require_subcommand(1);
  cpima::CliOptions opt;

  CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--config", opt.config_path, "JSON config")->required();
  gen->add_option("--out", opt.out_dir, "output directory")->required();
  gen->add_option("--seed", opt.seed_override, "override the config seed");

  CLI::App* train = app.add_subcommand("train", "fit a model to a dataset");
  train->add_option("--config", opt.config_path, "JSON config")->required();
  train->add_option("--data", opt.data_dir, "dataset directory")->required();
  train->add_option("--out", opt.out_dir, "run output directory")->required();
  train->add_option("--seed", opt.seed_override, "override the config seed");
  train->add_option("--resume", opt.resume_path, "checkpoint to resume from");

  CLI::App* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("run_dir", opt.run_dir, "run output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : cpima::kExitUsage;
  }

  if (gen->parsed()) return cpima::cmd_generate(opt);
  if (train->parsed()) return cpima::cmd_train(opt);
  return cpima::cmd_report(opt);
}
