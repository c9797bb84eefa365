#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "flockline/config.hpp"
#include "flockline/experiments.hpp"
#include "flockline/version.hpp"

using namespace flockline;

int main(int argc, char** argv) {
  CLI::App app{"flockline: mean-field jump flocking simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int jobs = 0;
  bool allow_unchecked = false;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");
  run->add_option("--jobs", jobs, "worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  run->add_flag("--allow-unchecked", allow_unchecked, "run even when the overshoot balance check fails");

  auto* validate = app.add_subcommand("validate", "check a config file without running it");
  validate->add_option("--config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSchema;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSchema;
  }

  if (validate->parsed()) {
    const auto rep = check_assumptions(cfg.model, cfg.a_grid.empty() ? default_a_grid() : cfg.a_grid);
    std::cout << "ok: " << experiment_name(cfg.experiment) << "\n";
    if (!rep.a21_holds) std::cout << "warning: " << rep.failure_message() << "\n";
    return kExitOk;
  }

  RunOptions opt;
  opt.out_dir = out_dir;
  opt.jobs = jobs;
  opt.allow_unchecked = allow_unchecked;
  return run_experiment(cfg, opt, std::cerr);
}
