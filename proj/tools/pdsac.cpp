// pdsac command-line entry point for quadrotor navigation agents.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdsac/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Parallel distributional soft actor-critic for mapless quadrotor navigation"};
  app.require_subcommand(1);

  std::string config_path;
  bool serial = false;
  auto* train = app.add_subcommand("train", "Train an agent from a JSON config");
  train->add_option("--config", config_path, "Run configuration")->required();
  train->add_flag("--serial", serial, "Deterministic single-threaded schedule");

  pdsac::EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the fixed targets");
  eval->add_option("--ckpt", eval_opt.checkpoint, "Checkpoint file")->required();
  eval->add_option("--env", eval_opt.env_id, "Environment id")->required()->check(CLI::Range(1, 3));
  eval->add_option("--targets", eval_opt.targets_path, "JSON file with target positions");
  eval->add_option("--layout", eval_opt.layout_path, "Layout file replacing the built-in room");
  eval->add_option("--out", eval_opt.out_dir, "Output directory for summary and trajectories");
  eval->add_option("--trials", eval_opt.trials_per_target, "Episodes per target")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_opt.seed, "Base seed for start noise");

  std::vector<std::string> plot_csvs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Plot reward curves from metrics CSVs");
  plot->add_option("csv", plot_csvs, "Metrics files")->required();
  plot->add_option("--out", plot_out, "Output SVG")->required();

  std::vector<std::string> traj_csvs;
  std::string traj_layout, traj_out;
  auto* traj = app.add_subcommand("traj-plot", "Top-down plot of evaluation trajectories");
  traj->add_option("csv", traj_csvs, "Trajectory files");
  traj->add_option("--layout", traj_layout, "Layout file")->required();
  traj->add_option("--out", traj_out, "Output SVG")->required();

  int layout_env = 1;
  std::string layout_out;
  auto* layout = app.add_subcommand("layout", "Write a built-in room layout as JSON");
  layout->add_option("--env", layout_env, "Environment id")->required()->check(CLI::Range(1, 3));
  layout->add_option("--out", layout_out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pdsac::kExitOk : pdsac::kExitUsage;
  }

  if (*train) return pdsac::cmd_train(config_path, serial);
  if (*eval) return pdsac::cmd_eval(eval_opt);
  if (*plot) return pdsac::cmd_plot(plot_csvs, plot_out);
  if (*traj) return pdsac::cmd_traj_plot(traj_csvs, traj_layout, traj_out);
  if (*layout) return pdsac::cmd_layout(layout_env, layout_out);
  return pdsac::kExitUsage;
}
