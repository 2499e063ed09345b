#pragma once

// Fixed-target evaluation: a number of deterministic-policy episodes per target,
// each from a differently jittered start, with per-episode trajectories.

#include <cmath>
#include <functional>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdsac/errors.hpp"
#include "pdsac/metrics.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

inline constexpr int kTrialsPerTarget = 25;

struct TrajectoryPoint {
  int t = 0;
  double x = 0.0, y = 0.0, z = 0.0, yaw = 0.0;
  double reward = 0.0;  // reward received on arriving at this pose; 0 at t = 0
  bool operator==(const TrajectoryPoint&) const = default;
};

struct EpisodeResult {
  int target_index = 0;
  int trial = 0;
  Vec3 goal;
  Outcome outcome = Outcome::running;
  double total_reward = 0.0;
  std::vector<TrajectoryPoint> trajectory;
};

using PolicyFn = std::function<Action(const Observation&)>;

inline std::uint64_t trial_seed(std::uint64_t base_seed, int target_index, int trial) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(target_index) * 1000003ULL + static_cast<std::uint64_t>(trial));
}

inline EpisodeResult run_episode(const WorldConfig& world, const Vec3& goal, std::uint64_t seed, const PolicyFn& policy) {
  ResetResult r = reset_with_goal(world, seed, goal);
  EpisodeResult ep;
  ep.goal = goal;
  WorldState s = std::move(r.state);
  Observation obs = r.observation;
  ep.trajectory.push_back({0, s.pose.x, s.pose.y, s.pose.z, s.pose.yaw, 0.0});
  while (!s.done) {
    StepResult st = step(s, policy(obs), world);
    s = std::move(st.state);
    obs = st.observation;
    ep.total_reward += st.reward;
    ep.trajectory.push_back({s.step_count, s.pose.x, s.pose.y, s.pose.z, s.pose.yaw, st.reward});
  }
  ep.outcome = s.outcome;
  return ep;
}

inline std::vector<EpisodeResult> run_evaluation(const WorldConfig& world, const std::vector<Vec3>& targets,
                                                 int trials_per_target, std::uint64_t base_seed,
                                                 const PolicyFn& policy) {
  if (targets.empty()) throw ConfigError("evaluation needs at least one target");
  if (trials_per_target <= 0) throw ConfigError("trials per target must be positive");
  std::vector<EpisodeResult> out;
  out.reserve(targets.size() * static_cast<std::size_t>(trials_per_target));
  for (int t = 0; t < static_cast<int>(targets.size()); ++t)
    for (int k = 0; k < trials_per_target; ++k) {
      EpisodeResult ep = run_episode(world, targets[t], trial_seed(base_seed, t, k), policy);
      ep.target_index = t;
      ep.trial = k;
      out.push_back(std::move(ep));
    }
  return out;
}

struct TargetSummary {
  Vec3 target;
  int trials = 0;
  int successes = 0;
  double mean_reward = 0.0;
};

struct EvalSummary {
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;  // percent
  double mean_reward = 0.0;
  double reward_std = 0.0;  // population standard deviation over all trials
  std::vector<TargetSummary> per_target;
  std::string config_hash;
};

struct EpisodeScore {
  int target_index = 0;
  bool success = false;
  double total_reward = 0.0;
};

inline EvalSummary summarize(const std::vector<EpisodeScore>& scores, const std::vector<Vec3>& targets) {
  EvalSummary s;
  s.per_target.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) s.per_target[i].target = targets[i];
  double sum = 0.0;
  for (const EpisodeScore& e : scores) {
    if (e.target_index < 0 || e.target_index >= static_cast<int>(targets.size()))
      throw DataError("episode target index out of range");
    TargetSummary& ts = s.per_target[static_cast<std::size_t>(e.target_index)];
    ++ts.trials;
    ts.successes += e.success ? 1 : 0;
    ts.mean_reward += e.total_reward;
    ++s.trials;
    s.successes += e.success ? 1 : 0;
    sum += e.total_reward;
  }
  for (TargetSummary& ts : s.per_target)
    if (ts.trials > 0) ts.mean_reward /= ts.trials;
  if (s.trials == 0) return s;
  s.success_rate = 100.0 * s.successes / s.trials;
  s.mean_reward = sum / s.trials;
  double ss = 0.0;
  for (const EpisodeScore& e : scores) ss += (e.total_reward - s.mean_reward) * (e.total_reward - s.mean_reward);
  s.reward_std = std::sqrt(ss / s.trials);
  return s;
}

inline EvalSummary summarize(const std::vector<EpisodeResult>& episodes, const std::vector<Vec3>& targets) {
  std::vector<EpisodeScore> scores;
  scores.reserve(episodes.size());
  for (const EpisodeResult& e : episodes) scores.push_back({e.target_index, e.outcome == Outcome::arrived, e.total_reward});
  return summarize(scores, targets);
}

inline nlohmann::json summary_to_json(const EvalSummary& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const TargetSummary& t : s.per_target)
    per.push_back({{"target", {t.target.x, t.target.y, t.target.z}},
                   {"trials", t.trials},
                   {"successes", t.successes},
                   {"mean_reward", t.mean_reward}});
  return {{"trials", s.trials},          {"successes", s.successes}, {"success_rate", s.success_rate},
          {"mean_reward", s.mean_reward}, {"reward_std", s.reward_std}, {"per_target", per},
          {"config_hash", s.config_hash}};
}

// Trajectory CSV: metadata comments then one row per pose.
struct TrajectoryFile {
  int layout_version = 0;
  std::string config_hash;
  Vec3 goal;
  int target_index = 0;
  Outcome outcome = Outcome::running;
  std::vector<TrajectoryPoint> points;

  double total_reward() const {
    double s = 0.0;
    for (const TrajectoryPoint& p : points) s += p.reward;
    return s;
  }
};

inline void write_trajectory_csv(const std::string& path, const EpisodeResult& ep, int layout_version,
                                 const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory file " + path);
  out << "# layout_version: " << layout_version << '\n'
      << "# config_hash: " << config_hash << '\n'
      << "# goal: " << format_double(ep.goal.x) << ',' << format_double(ep.goal.y) << ','
      << format_double(ep.goal.z) << '\n'
      << "# target_index: " << ep.target_index << '\n'
      << "# outcome: " << to_string(ep.outcome) << '\n'
      << "t,x,y,z,yaw,reward\n";
  for (const TrajectoryPoint& p : ep.trajectory)
    out << p.t << ',' << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z) << ','
        << format_double(p.yaw) << ',' << format_double(p.reward) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

inline Outcome parse_outcome(const std::string& s) {
  for (Outcome o : {Outcome::running, Outcome::arrived, Outcome::collided, Outcome::timeout})
    if (s == to_string(o)) return o;
  throw DataError("unknown outcome '" + s + "'");
}

inline TrajectoryFile read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file " + path);
  TrajectoryFile f;
  bool header = false, have_version = false;
  std::string line;
  std::size_t lineno = 0;
  auto value_of = [](const std::string& l, const std::string& key) -> std::optional<std::string> {
    const std::string prefix = "# " + key + ": ";
    if (l.rfind(prefix, 0) != 0) return std::nullopt;
    return l.substr(prefix.size());
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line[0] == '#') {
      if (auto v = value_of(line, "layout_version")) {
        f.layout_version = static_cast<int>(parse_double(*v, where));
        have_version = true;
      } else if (auto v = value_of(line, "config_hash")) {
        f.config_hash = *v;
      } else if (auto v = value_of(line, "goal")) {
        const auto parts = split_csv_line(*v);
        if (parts.size() != 3) throw DataError(where + ": goal needs 3 components");
        f.goal = {parse_double(parts[0], where), parse_double(parts[1], where), parse_double(parts[2], where)};
      } else if (auto v = value_of(line, "target_index")) {
        f.target_index = static_cast<int>(parse_double(*v, where));
      } else if (auto v = value_of(line, "outcome")) {
        f.outcome = parse_outcome(*v);
      }
      continue;
    }
    if (!header) {
      if (line != "t,x,y,z,yaw,reward") throw DataError(where + ": unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto p = split_csv_line(line);
    if (p.size() != 6) throw DataError(where + ": expected 6 fields");
    f.points.push_back({static_cast<int>(parse_double(p[0], where)), parse_double(p[1], where),
                        parse_double(p[2], where), parse_double(p[3], where), parse_double(p[4], where),
                        parse_double(p[5], where)});
  }
  if (!header) throw DataError(path + ": missing header");
  if (!have_version) throw DataError(path + ": missing layout_version");
  return f;
}

}  // namespace pdsac
