#pragma once

// Command implementations behind the pdsac executable. Each returns a process
// exit code; messages go to the supplied streams.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdsac/checkpoint.hpp"
#include "pdsac/config.hpp"
#include "pdsac/dsac.hpp"
#include "pdsac/errors.hpp"
#include "pdsac/evaluation.hpp"
#include "pdsac/layout.hpp"
#include "pdsac/learner.hpp"
#include "pdsac/metrics.hpp"
#include "pdsac/orchestrator.hpp"
#include "pdsac/plot.hpp"
#include "pdsac/replay.hpp"
#include "pdsac/sac.hpp"

namespace pdsac {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitTrainingFault = 3 };

inline SoftActorCriticConfig sac_config_for(const RunConfig& c) {
  SoftActorCriticConfig s;
  s.gamma = c.sac.gamma;
  s.tau = c.sac.tau;
  s.temperature = c.sac.temperature;
  s.adam.lr = c.sac.lr;
  s.log_std = {c.network.log_std_min, c.network.log_std_max};
  return s;
}

// Scalar or categorical critics depending on the variant.
inline std::unique_ptr<Learner> make_learner(const RunConfig& c) {
  Rng init(derive_seed(c.seed, 0x4e455453ULL));
  const std::uint64_t learner_seed = derive_seed(c.seed, 0x4c524e52ULL);
  if (is_distributional(c.variant)) {
    DsacConfig d;
    d.sac = sac_config_for(c);
    d.atoms = c.distributional.atoms;
    d.v_min = c.distributional.v_min;
    d.v_max = c.distributional.v_max;
    DsacNets nets =
        DsacNets::create(kObservationSize, c.network.hidden_width, d.atoms, init, c.network.policy_output_scale);
    return std::make_unique<DsacLearner>(std::move(nets), d, learner_seed);
  }
  SacNets nets = SacNets::create(kObservationSize, c.network.hidden_width, init, c.network.policy_output_scale);
  return std::make_unique<SacLearner>(std::move(nets), sac_config_for(c), learner_seed);
}

inline OrchestratorConfig orchestrator_config_for(const RunConfig& c) {
  OrchestratorConfig o;
  o.explorers = c.orchestrator.explorers;
  o.evaluator = c.orchestrator.evaluator;
  o.flush_interval = c.orchestrator.flush_interval;
  o.broadcast_interval = c.orchestrator.broadcast_interval;
  o.warmup = c.orchestrator.warmup;
  o.update_budget = c.orchestrator.update_budget;
  o.env_step_budget = c.orchestrator.env_step_budget;
  o.batch_size = c.sac.batch_size;
  o.prioritized = is_prioritized(c.variant);
  o.beta_start = c.replay.beta_start;
  o.beta_end = c.replay.beta_end;
  o.eval_window = c.orchestrator.eval_window;
  o.seed = c.seed;
  o.variant = to_string(c.variant);
  return o;
}

inline ReplayConfig replay_config_for(const RunConfig& c) {
  ReplayConfig r;
  r.capacity = c.replay.capacity;
  r.alpha = c.replay.alpha;
  r.priority_eps = c.replay.priority_eps;
  return r;
}

// PDSAC_SEED, when set, replaces the configured seed.
inline void apply_seed_override(RunConfig& c) {
  const char* env = std::getenv("PDSAC_SEED");
  if (!env || !*env) return;
  const std::string s = env;
  if (s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("PDSAC_SEED must be a non-negative integer, got '" + s + "'");
  try {
    c.seed = std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError("PDSAC_SEED out of range: '" + s + "'");
  }
}

inline void write_checkpoint_with_meta(const Learner& learner, const std::string& path, const RunConfig& cfg,
                                       const std::string& hash) {
  save_checkpoint(learner.parameters(), path);
  const nlohmann::json meta = {{"config_hash", hash},
                               {"variant", to_string(cfg.variant)},
                               {"env_id", cfg.env_id},
                               {"seed", cfg.seed},
                               {"learner_step", learner.update_count()}};
  std::ofstream out(path + ".meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path + ".meta.json");
}

inline std::string checkpoint_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08llu.bin", static_cast<unsigned long long>(step));
  return buf;
}

struct TrainResult {
  int exit_code = kExitOk;
  RunStats stats;
  std::string config_hash;
};

// Trains from a config file. Artifacts written to output_dir:
// config.json, metrics.csv, evals.csv, checkpoints/ckpt_<step>.bin and final.bin.
// A training fault stores fault.bin before returning exit code 3.
inline TrainResult train(const std::string& config_path, bool force_serial, std::ostream& log, std::ostream& err) {
  TrainResult result;
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
    apply_seed_override(cfg);
    if (force_serial) cfg.serial = true;
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    result.exit_code = kExitConfig;
    return result;
  }
  namespace fs = std::filesystem;
  const fs::path out = cfg.output_dir;
  std::unique_ptr<Learner> learner;
  try {
    fs::create_directories(out / "checkpoints");
    const WorldConfig world = world_for(cfg);
    save_config(cfg, (out / "config.json").string());
    result.config_hash = config_hash(cfg);
    learner = make_learner(cfg);
    ReplayBuffer replay(replay_config_for(cfg));
    const OrchestratorConfig ocfg = orchestrator_config_for(cfg);

    MetricsWriter metrics((out / "metrics.csv").string(), result.config_hash);
    std::ofstream evals(out / "evals.csv");
    if (!evals) throw DataError("cannot write " + (out / "evals.csv").string());
    evals << "# config_hash: " << result.config_hash << "\nlearner_step,reward,outcome,steps\n";

    RunHooks hooks;
    hooks.on_update = [&](const MetricsRow& r) { metrics.write(r); };
    hooks.checkpoint_interval = cfg.orchestrator.checkpoint_interval;
    hooks.on_checkpoint = [&](const Learner& l) {
      write_checkpoint_with_meta(l, (out / "checkpoints" / checkpoint_name(l.update_count())).string(), cfg,
                                 result.config_hash);
      log << "checkpoint at update " << l.update_count() << '\n';
    };
    hooks.on_eval = [&](const EvalRecord& r) {
      evals << r.learner_step << ',' << format_double(r.reward) << ',' << to_string(r.outcome) << ',' << r.steps
            << '\n';
    };

    log << "training " << to_string(cfg.variant) << " on env " << cfg.env_id << " (seed " << cfg.seed << ", "
        << (cfg.serial ? "serial" : "parallel") << ", hash " << result.config_hash << ")\n";
    result.stats = cfg.serial ? run_serial(ocfg, world, *learner, replay, hooks)
                              : run_parallel(ocfg, world, *learner, replay, hooks);
    metrics.close();
    write_checkpoint_with_meta(*learner, (out / "final.bin").string(), cfg, result.config_hash);
    log << "done: " << result.stats.updates << " updates, " << result.stats.env_steps << " env steps, "
        << result.stats.eval_records.size() << " evaluation episodes\n";
  } catch (const TrainingFault& e) {
    err << "training fault: " << e.what() << '\n';
    if (learner) {
      try {
        write_checkpoint_with_meta(*learner, (out / "fault.bin").string(), cfg, result.config_hash);
        err << "parameters preserved in " << (out / "fault.bin").string() << '\n';
      } catch (const std::exception& e2) {
        err << "could not preserve parameters: " << e2.what() << '\n';
      }
    }
    result.exit_code = kExitTrainingFault;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    result.exit_code = kExitConfig;
  }
  return result;
}

inline int cmd_train(const std::string& config_path, bool force_serial, std::ostream& log = std::cout,
                     std::ostream& err = std::cerr) {
  return train(config_path, force_serial, log, err).exit_code;
}

inline std::vector<Vec3> load_targets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open targets file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("targets " + path + ": " + e.what());
  }
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    detail::reject_unknown(j, {"targets"}, "targets");
    arr = &detail::require(j, "targets", "targets");
  }
  if (!arr->is_array() || arr->empty()) throw ConfigError("targets: expected a non-empty array of [x, y, z]");
  std::vector<Vec3> out;
  for (const auto& t : *arr) out.push_back(detail::vec_from_json(t, "targets[]"));
  return out;
}

inline std::string read_checkpoint_hash(const std::string& ckpt) {
  std::ifstream in(ckpt + ".meta.json");
  if (!in) return "unknown";
  try {
    nlohmann::json j;
    in >> j;
    return j.value("config_hash", std::string("unknown"));
  } catch (const nlohmann::json::exception&) {
    return "unknown";
  }
}

struct EvalOptions {
  std::string checkpoint;
  int env_id = 1;
  std::string targets_path;
  std::string layout_path;
  std::string out_dir;  // default: <checkpoint>.eval_env<N>
  int trials_per_target = kTrialsPerTarget;
  std::uint64_t seed = 0;
};

struct EvalRun {
  EvalSummary summary;
  std::vector<std::string> trajectory_files;
  std::string summary_path;
};

// Deterministic-policy evaluation of a checkpoint's policy.
inline EvalRun evaluate_checkpoint(const EvalOptions& opt) {
  const WorldConfig world = opt.layout_path.empty() ? make_environment(opt.env_id) : load_layout(opt.layout_path);
  const std::vector<Vec3> targets = opt.targets_path.empty() ? world.eval_targets : load_targets(opt.targets_path);
  const std::vector<NamedParams> sets = load_checkpoint(opt.checkpoint);
  const ParamSet& policy = find_params(sets, "policy");
  Mlp net;
  try {
    net = Mlp::from_params(policy);
  } catch (const ShapeError& e) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, std::string("policy: ") + e.what());
  }
  if (net.input_size() != kObservationSize || net.output_size() != 2 * kActionSize)
    throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                          "policy expects " + std::to_string(net.input_size()) + " inputs and " +
                              std::to_string(net.output_size()) + " outputs");
  const FeatureEncoder enc = FeatureEncoder::for_world(world);
  Rng unused(0);
  const PolicyFn fn = [&](const Observation& o) {
    return select_action(net, policy, o, enc, ActionMode::evaluate, unused);
  };

  EvalRun run;
  const std::vector<EpisodeResult> episodes = run_evaluation(world, targets, opt.trials_per_target, opt.seed, fn);
  run.summary = summarize(episodes, targets);
  run.summary.config_hash = read_checkpoint_hash(opt.checkpoint);

  namespace fs = std::filesystem;
  const fs::path out = opt.out_dir.empty() ? fs::path(opt.checkpoint + ".eval_env" + std::to_string(world.env_id))
                                           : fs::path(opt.out_dir);
  fs::create_directories(out);
  for (const EpisodeResult& e : episodes) {
    char name[64];
    std::snprintf(name, sizeof name, "traj_t%d_%02d.csv", e.target_index, e.trial);
    const std::string p = (out / name).string();
    write_trajectory_csv(p, e, world.layout_version, run.summary.config_hash);
    run.trajectory_files.push_back(p);
  }
  run.summary_path = (out / "summary.json").string();
  std::ofstream s(run.summary_path);
  s << summary_to_json(run.summary).dump(2) << '\n';
  if (!s) throw DataError("cannot write " + run.summary_path);
  return run;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    const EvalRun run = evaluate_checkpoint(opt);
    char line[160];
    std::snprintf(line, sizeof line, "success %.2f%% (%d/%d), reward %.2f +- %.2f\n", run.summary.success_rate,
                  run.summary.successes, run.summary.trials, run.summary.mean_reward, run.summary.reward_std);
    log << line << "summary: " << run.summary_path << '\n';
    return kExitOk;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
  }
  return kExitConfig;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path);
}

inline std::string series_label(const MetricsFile& f, const std::string& path) {
  if (!f.rows.empty() && !f.rows.front().variant.empty()) return f.rows.front().variant;
  return std::filesystem::path(path).stem().string();
}

// Reward curves of several runs in one SVG plus <out>.dat for gnuplot.
inline int cmd_plot(const std::vector<std::string>& csvs, const std::string& out_svg, std::ostream& log = std::cout,
                    std::ostream& err = std::cerr) {
  if (csvs.empty()) {
    err << "plot: at least one metrics CSV is required\n";
    return kExitUsage;
  }
  try {
    std::vector<CurveSeries> series;
    for (const std::string& p : csvs) {
      const MetricsFile f = read_metrics_csv(p);
      series.push_back(reward_curve(f, series_label(f, p)));
    }
    write_text(out_svg, reward_curve_svg(series, "Evaluation reward"));
    const std::string dat = std::filesystem::path(out_svg).replace_extension(".dat").string();
    write_text(dat, reward_curve_dat(series));
    log << "wrote " << out_svg << " and " << dat << '\n';
    return kExitOk;
  } catch (const DataError& e) {
    err << "plot: " << e.what() << '\n';
    return kExitConfig;
  }
}

inline int cmd_traj_plot(const std::vector<std::string>& csvs, const std::string& layout_path,
                         const std::string& out_svg, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    const WorldConfig world = load_layout(layout_path);
    std::vector<TrajectoryFile> trajs;
    for (const std::string& p : csvs) trajs.push_back(read_trajectory_csv(p));
    write_text(out_svg, trajectory_svg(world, trajs));
    log << "wrote " << out_svg << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "traj-plot: " << e.what() << '\n';
  } catch (const DataError& e) {
    err << "traj-plot: " << e.what() << '\n';
  }
  return kExitConfig;
}

inline int cmd_layout(int env_id, const std::string& out_path, std::ostream& log = std::cout,
                      std::ostream& err = std::cerr) {
  try {
    save_layout(make_environment(env_id), out_path);
    log << "wrote " << out_path << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "layout: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace pdsac
