// Command-line front end: run configured experiments, replay stored
// trajectories, list what's available.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trapsim/experiments.hpp"
#include "trapsim/walk.hpp"

namespace {

int cmd_run(const std::string& config_path) {
  trapsim::RunReport report = trapsim::run_experiment_file(config_path);
  if (report.exit_code != 0) {
    std::fprintf(stderr, "error: %s\n", report.message.c_str());
    return report.exit_code;
  }
  std::printf("done\n");
  return 0;
}

int cmd_replay(const std::string& path) {
  try {
    trapsim::TrajectoryFile tf = trapsim::load_trajectory(path);
    std::fputs(trapsim::trajectory_report(tf).c_str(), stdout);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trap-model experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "path to the TOML-style config")->required();

  std::string traj_path;
  CLI::App* replay = app.add_subcommand("replay", "summarize a stored trajectory");
  replay->add_option("file", traj_path, "path to a trajectory file")->required();

  CLI::App* list = app.add_subcommand("list-experiments", "print known experiment names");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path);
  if (replay->parsed()) return cmd_replay(traj_path);
  if (list->parsed()) {
    for (const std::string& name : trapsim::experiment_names()) std::printf("%s\n", name.c_str());
    return 0;
  }
  return 0;
}
