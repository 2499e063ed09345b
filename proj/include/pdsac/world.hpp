#pragma once

// Deterministic kinematic drone world: a walled room with box obstacles, a
// horizontal 23-beam lidar and the sparse arrive/collide reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pdsac/errors.hpp"
#include "pdsac/rng.hpp"

namespace pdsac {

inline constexpr std::size_t kLidarBeams = 23;
inline constexpr std::size_t kObservationSize = kLidarBeams + 3;
inline constexpr std::size_t kActionSize = 3;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Vec3&) const = default;
};

inline double distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 1.0;
  double yaw = 0.0;  // (-pi, pi]

  Vec3 position() const { return {x, y, z}; }
  bool operator==(const Pose&) const = default;
};

// Velocity command. Construction from raw policy output scales [-1,1]^3.
struct Action {
  static constexpr double kMaxLinear = 0.25;    // m/s
  static constexpr double kMaxYawRate = 0.1;    // rad/s
  static constexpr double kMaxVertical = 0.25;  // m/s

  double v_lin = 0.0;
  double v_yaw = 0.0;
  double v_alt = 0.0;

  static Action from_raw(const std::array<double, kActionSize>& raw) {
    auto c = [](double v) { return std::clamp(v, -1.0, 1.0); };
    return {c(raw[0]) * kMaxLinear, c(raw[1]) * kMaxYawRate, c(raw[2]) * kMaxVertical};
  }

  bool within_bounds() const {
    return std::abs(v_lin) <= kMaxLinear && std::abs(v_yaw) <= kMaxYawRate &&
           std::abs(v_alt) <= kMaxVertical;
  }
};

// Axis-aligned obstacle.
struct Box {
  Vec3 center;
  Vec3 size;

  Vec3 lo() const { return {center.x - size.x / 2, center.y - size.y / 2, center.z - size.z / 2}; }
  Vec3 hi() const { return {center.x + size.x / 2, center.y + size.y / 2, center.z + size.z / 2}; }

  bool contains(const Vec3& p) const {
    const Vec3 a = lo(), b = hi();
    return p.x >= a.x && p.x <= b.x && p.y >= a.y && p.y <= b.y && p.z >= a.z && p.z <= b.z;
  }

  bool operator==(const Box&) const = default;
};

struct LidarSpec {
  std::size_t beams = kLidarBeams;
  double fov = 1.5 * std::numbers::pi;  // 270 degrees
  double max_range = 10.0;

  // Beam angle relative to the heading; evenly spaced, symmetric about 0.
  double beam_angle(std::size_t i) const {
    return -fov / 2.0 + fov * static_cast<double>(i) / static_cast<double>(beams - 1);
  }

  bool operator==(const LidarSpec&) const = default;
};

struct RewardSpec {
  double arrival = 200.0;
  double collision = -20.0;
  double idle = 0.0;
  double arrival_radius = 0.85;      // c_d
  double collision_distance = 0.65;  // c_o
  double z_min = 0.2;
  double z_max = 4.0;

  bool operator==(const RewardSpec&) const = default;
};

struct GoalRegion {
  Vec3 lo{-4.0, -4.0, 0.5};
  Vec3 hi{4.0, 4.0, 3.5};

  bool operator==(const GoalRegion&) const = default;
};

inline constexpr int kLayoutVersion = 1;

struct WorldConfig {
  int layout_version = kLayoutVersion;
  int env_id = 1;
  double room_half_extent = 5.0;  // walls at |x| = |y| = half extent
  std::vector<Box> obstacles;
  Pose start{0.0, 0.0, 1.0, 0.0};
  double start_jitter_xy = 0.1;   // uniform +- around the start, metres
  double start_jitter_yaw = 0.1;  // uniform +- around the start heading, radians
  GoalRegion goal_region;
  std::vector<Vec3> eval_targets;
  LidarSpec lidar;
  RewardSpec reward;
  int episode_cap = 500;
  double dt = 0.2;

  bool operator==(const WorldConfig&) const = default;

  bool inside_room(const Vec3& p) const {
    return std::abs(p.x) < room_half_extent && std::abs(p.y) < room_half_extent;
  }

  bool inside_obstacle(const Vec3& p) const {
    return std::any_of(obstacles.begin(), obstacles.end(), [&](const Box& b) { return b.contains(p); });
  }

  // Throws ConfigError describing the first violated constraint.
  void validate() const {
    if (layout_version != kLayoutVersion)
      throw ConfigError("unsupported layout_version " + std::to_string(layout_version));
    if (lidar.beams != kLidarBeams) throw ConfigError("lidar must have exactly 23 beams");
    if (!(lidar.fov > 0.0 && lidar.fov <= 2.0 * std::numbers::pi)) throw ConfigError("lidar fov out of range");
    if (!(lidar.max_range > 0.0)) throw ConfigError("lidar max_range must be positive");
    if (episode_cap <= 0) throw ConfigError("episode cap must be positive");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(room_half_extent > 0.0)) throw ConfigError("room half extent must be positive");
    for (const Box& b : obstacles) {
      const Vec3 lo = b.lo(), hi = b.hi();
      if (!(b.size.x > 0 && b.size.y > 0 && b.size.z > 0)) throw ConfigError("obstacle with non-positive size");
      if (lo.x < -room_half_extent || hi.x > room_half_extent || lo.y < -room_half_extent ||
          hi.y > room_half_extent)
        throw ConfigError("obstacle outside the room");
    }
    if (!inside_room(start.position())) throw ConfigError("start pose outside the room");
    const GoalRegion& g = goal_region;
    if (!(g.lo.x <= g.hi.x && g.lo.y <= g.hi.y && g.lo.z <= g.hi.z)) throw ConfigError("empty goal region");
  }
};

struct Observation {
  std::array<double, kLidarBeams> ranges{};
  double goal_dist = 0.0;
  double goal_angle = 0.0;  // bearing error in the horizontal plane, (-pi, pi]
  double goal_dz = 0.0;     // goal z minus drone z

  double min_range() const { return *std::min_element(ranges.begin(), ranges.end()); }

  std::array<double, kObservationSize> flat() const {
    std::array<double, kObservationSize> out{};
    std::copy(ranges.begin(), ranges.end(), out.begin());
    out[kLidarBeams] = goal_dist;
    out[kLidarBeams + 1] = goal_angle;
    out[kLidarBeams + 2] = goal_dz;
    return out;
  }

  bool operator==(const Observation&) const = default;
};

enum class Outcome { running, arrived, collided, timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::arrived: return "arrived";
    case Outcome::collided: return "collided";
    case Outcome::timeout: return "timeout";
  }
  return "?";
}

struct WorldState {
  Pose pose;
  Vec3 goal;
  int step_count = 0;
  bool done = false;
  Outcome outcome = Outcome::running;
  Rng rng;

  bool operator==(const WorldState&) const = default;
};

namespace detail {

// Entry distance of a horizontal ray into the xy footprint of a box, or nullopt.
// Returns 0 when the origin is already inside.
inline std::optional<double> ray_box_2d(double ox, double oy, double dx, double dy, const Box& box) {
  const Vec3 lo = box.lo(), hi = box.hi();
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const double o[2] = {ox, oy}, d[2] = {dx, dy}, a[2] = {lo.x, lo.y}, b[2] = {hi.x, hi.y};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < a[k] || o[k] > b[k]) return std::nullopt;
      continue;
    }
    double t1 = (a[k] - o[k]) / d[k];
    double t2 = (b[k] - o[k]) / d[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_far < std::max(t_near, 0.0)) return std::nullopt;
  return std::max(t_near, 0.0);
}

// Exit distance from the inside of the square room.
inline double ray_room_exit(double ox, double oy, double dx, double dy, double h) {
  double t = std::numeric_limits<double>::infinity();
  if (dx > 0) t = std::min(t, (h - ox) / dx);
  if (dx < 0) t = std::min(t, (-h - ox) / dx);
  if (dy > 0) t = std::min(t, (h - oy) / dy);
  if (dy < 0) t = std::min(t, (-h - oy) / dy);
  return std::max(t, 0.0);
}

}  // namespace detail

// Horizontal lidar at the drone's altitude. A box is seen only when the scan
// plane cuts it. Origins outside the room or inside a box read 0 on every beam.
inline std::array<double, kLidarBeams> raycast_lidar(const Pose& pose, const WorldConfig& config) {
  std::array<double, kLidarBeams> ranges{};
  const Vec3 p = pose.position();
  if (!config.inside_room(p) || config.inside_obstacle(p)) return ranges;

  for (std::size_t i = 0; i < kLidarBeams; ++i) {
    const double angle = pose.yaw + config.lidar.beam_angle(i);
    const double dx = std::cos(angle), dy = std::sin(angle);
    double best = detail::ray_room_exit(p.x, p.y, dx, dy, config.room_half_extent);
    for (const Box& box : config.obstacles) {
      const Vec3 lo = box.lo(), hi = box.hi();
      if (p.z < lo.z || p.z > hi.z) continue;
      if (auto t = detail::ray_box_2d(p.x, p.y, dx, dy, box)) best = std::min(best, *t);
    }
    ranges[i] = std::min(best, config.lidar.max_range);
  }
  return ranges;
}

inline Observation observe(const Pose& pose, const Vec3& goal, const WorldConfig& config) {
  Observation obs;
  obs.ranges = raycast_lidar(pose, config);
  obs.goal_dist = distance(pose.position(), goal);
  obs.goal_angle = wrap_angle(std::atan2(goal.y - pose.y, goal.x - pose.x) - pose.yaw);
  obs.goal_dz = goal.z - pose.z;
  return obs;
}

struct RewardResult {
  double reward = 0.0;
  Outcome outcome = Outcome::running;
};

// Sparse reward. Arrival takes precedence over collision when both hold.
inline RewardResult compute_reward(const Observation& obs, double z, const WorldConfig& config) {
  const RewardSpec& r = config.reward;
  if (obs.goal_dist < r.arrival_radius) return {r.arrival, Outcome::arrived};
  if (obs.min_range() < r.collision_distance || z < r.z_min || z > r.z_max)
    return {r.collision, Outcome::collided};
  return {r.idle, Outcome::running};
}

struct StepResult {
  WorldState state;
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Outcome outcome = Outcome::running;
};

struct ResetResult {
  WorldState state;
  Observation observation;
};

namespace detail {

inline Pose jittered_start(const WorldConfig& config, Rng& rng) {
  Pose p = config.start;
  p.x += rng.uniform(-config.start_jitter_xy, config.start_jitter_xy);
  p.y += rng.uniform(-config.start_jitter_xy, config.start_jitter_xy);
  p.yaw = wrap_angle(p.yaw + rng.uniform(-config.start_jitter_yaw, config.start_jitter_yaw));
  return p;
}

}  // namespace detail

// Starts an episode towards a fixed goal (evaluation protocol).
inline ResetResult reset_with_goal(const WorldConfig& config, std::uint64_t seed, const Vec3& goal) {
  config.validate();
  WorldState s;
  s.rng = Rng(derive_seed(seed, 0x5741524cULL));
  s.pose = detail::jittered_start(config, s.rng);
  s.goal = goal;
  Observation obs = observe(s.pose, s.goal, config);
  return {std::move(s), obs};
}

// Starts an episode with a goal sampled uniformly from the goal region, away
// from obstacles and outside the arrival radius of the start.
inline ResetResult reset(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  WorldState s;
  s.rng = Rng(derive_seed(seed, 0x5741524cULL));
  s.pose = detail::jittered_start(config, s.rng);
  const GoalRegion& g = config.goal_region;
  constexpr int kMaxAttempts = 10000;
  bool found = false;
  for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
    const Vec3 cand{s.rng.uniform(g.lo.x, g.hi.x), s.rng.uniform(g.lo.y, g.hi.y), s.rng.uniform(g.lo.z, g.hi.z)};
    if (!config.inside_room(cand) || config.inside_obstacle(cand)) continue;
    if (distance(cand, s.pose.position()) < config.reward.arrival_radius) continue;
    s.goal = cand;
    found = true;
  }
  if (!found) throw ConfigError("goal sampling failed after 10000 attempts");
  Observation obs = observe(s.pose, s.goal, config);
  return {std::move(s), obs};
}

// Forward-Euler velocity integration followed by sensing and reward.
inline StepResult step(const WorldState& state, const Action& action, const WorldConfig& config) {
  if (state.done) throw UsageError("step() called on a finished episode");
  if (!action.within_bounds()) throw UsageError("action outside its bounds");

  StepResult out;
  out.state = state;
  Pose& p = out.state.pose;
  p.x += action.v_lin * std::cos(p.yaw) * config.dt;
  p.y += action.v_lin * std::sin(p.yaw) * config.dt;
  p.yaw = wrap_angle(p.yaw + action.v_yaw * config.dt);
  p.z += action.v_alt * config.dt;
  out.state.step_count += 1;

  out.observation = observe(p, out.state.goal, config);
  const RewardResult r = compute_reward(out.observation, p.z, config);
  out.reward = r.reward;
  out.outcome = r.outcome;
  if (out.outcome == Outcome::running && out.state.step_count >= config.episode_cap)
    out.outcome = Outcome::timeout;
  out.done = out.outcome != Outcome::running;
  out.state.done = out.done;
  out.state.outcome = out.outcome;
  return out;
}

// Canonical rooms. These are frozen; data/layouts/env*.json are generated from
// them and a test checks the shipped files stay identical.
inline WorldConfig make_environment(int id) {
  WorldConfig c;
  c.env_id = id;
  switch (id) {
    case 1:
      c.eval_targets = {{3.0, 3.0, 1.5}, {-3.0, 3.0, 2.0}, {-3.0, -3.0, 1.0}, {3.0, -3.0, 2.5}};
      break;
    case 2:
      // Four 0.5 m pillars, 3 m tall so they can be overflown; targets sit behind them.
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0}) c.obstacles.push_back({{2.5 * sx, 2.5 * sy, 1.5}, {0.5, 0.5, 3.0}});
      c.eval_targets = {{3.5, 3.5, 1.5}, {-3.5, 3.5, 1.0}, {-3.5, -3.5, 2.0}, {3.5, -3.5, 1.2}};
      break;
    case 3:
      c.obstacles = {
          {{2.0, 0.0, 0.75}, {0.5, 4.0, 1.5}},    // low wall, fly over above 1.5 m
          {{-2.0, 0.0, 2.75}, {0.5, 4.0, 2.5}},   // hanging wall, fly under below 1.5 m
          {{0.0, 2.5, 2.25}, {0.6, 0.6, 4.5}},    // full-height pillar
          {{0.0, -2.5, 2.25}, {0.6, 0.6, 4.5}},   // full-height pillar
          {{2.5, 3.0, 2.0}, {1.0, 1.0, 1.0}},     // floating block 1.5-2.5 m
          {{-2.5, -3.0, 1.0}, {1.0, 1.0, 1.0}},   // floating block 0.5-1.5 m
      };
      c.eval_targets = {{3.5, 0.0, 1.0}, {-3.5, 0.0, 1.0}, {2.5, 4.0, 1.0}, {-2.5, -4.0, 2.5}};
      break;
    default:
      throw ConfigError("unknown environment id " + std::to_string(id));
  }
  c.validate();
  return c;
}

}  // namespace pdsac
