#pragma once

// JSON layout files describing a room: extent, obstacles, start pose,
// goal region and the fixed evaluation targets.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pdsac/errors.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

namespace detail {

inline nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline Vec3 vec_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return j.at(key);
}

}  // namespace detail

inline nlohmann::json layout_to_json(const WorldConfig& c) {
  using nlohmann::json;
  json obstacles = json::array();
  for (const Box& b : c.obstacles)
    obstacles.push_back({{"center", detail::vec_to_json(b.center)}, {"size", detail::vec_to_json(b.size)}});
  json targets = json::array();
  for (const Vec3& t : c.eval_targets) targets.push_back(detail::vec_to_json(t));
  return {
      {"layout_version", c.layout_version},
      {"env_id", c.env_id},
      {"room_half_extent", c.room_half_extent},
      {"obstacles", obstacles},
      {"start", {{"x", c.start.x}, {"y", c.start.y}, {"z", c.start.z}, {"yaw", c.start.yaw}}},
      {"start_jitter_xy", c.start_jitter_xy},
      {"start_jitter_yaw", c.start_jitter_yaw},
      {"goal_region", {{"min", detail::vec_to_json(c.goal_region.lo)}, {"max", detail::vec_to_json(c.goal_region.hi)}}},
      {"eval_targets", targets},
      {"lidar", {{"beams", c.lidar.beams}, {"fov_rad", c.lidar.fov}, {"max_range", c.lidar.max_range}}},
      {"reward",
       {{"arrival", c.reward.arrival},
        {"collision", c.reward.collision},
        {"idle", c.reward.idle},
        {"arrival_radius", c.reward.arrival_radius},
        {"collision_distance", c.reward.collision_distance},
        {"z_min", c.reward.z_min},
        {"z_max", c.reward.z_max}}},
      {"episode_cap", c.episode_cap},
      {"dt", c.dt},
  };
}

inline WorldConfig layout_from_json(const nlohmann::json& j) {
  using detail::require;
  const std::string where = "layout";
  detail::reject_unknown(j,
                         {"layout_version", "env_id", "room_half_extent", "obstacles", "start", "start_jitter_xy",
                          "start_jitter_yaw", "goal_region", "eval_targets", "lidar", "reward", "episode_cap", "dt"},
                         where);
  WorldConfig c;
  try {
    c.layout_version = require(j, "layout_version", where).get<int>();
    if (c.layout_version != kLayoutVersion)
      throw ConfigError("layout: unsupported layout_version " + std::to_string(c.layout_version));
    c.env_id = require(j, "env_id", where).get<int>();
    c.room_half_extent = require(j, "room_half_extent", where).get<double>();
    for (const auto& o : require(j, "obstacles", where)) {
      detail::reject_unknown(o, {"center", "size"}, "layout.obstacles[]");
      c.obstacles.push_back({detail::vec_from_json(require(o, "center", where), "obstacle center"),
                             detail::vec_from_json(require(o, "size", where), "obstacle size")});
    }
    const auto& s = require(j, "start", where);
    detail::reject_unknown(s, {"x", "y", "z", "yaw"}, "layout.start");
    c.start = {require(s, "x", where).get<double>(), require(s, "y", where).get<double>(),
               require(s, "z", where).get<double>(), require(s, "yaw", where).get<double>()};
    c.start_jitter_xy = require(j, "start_jitter_xy", where).get<double>();
    c.start_jitter_yaw = require(j, "start_jitter_yaw", where).get<double>();
    const auto& g = require(j, "goal_region", where);
    detail::reject_unknown(g, {"min", "max"}, "layout.goal_region");
    c.goal_region = {detail::vec_from_json(require(g, "min", where), "goal_region.min"),
                     detail::vec_from_json(require(g, "max", where), "goal_region.max")};
    for (const auto& t : require(j, "eval_targets", where)) c.eval_targets.push_back(detail::vec_from_json(t, "target"));
    const auto& l = require(j, "lidar", where);
    detail::reject_unknown(l, {"beams", "fov_rad", "max_range"}, "layout.lidar");
    c.lidar = {require(l, "beams", where).get<std::size_t>(), require(l, "fov_rad", where).get<double>(),
               require(l, "max_range", where).get<double>()};
    const auto& r = require(j, "reward", where);
    detail::reject_unknown(
        r, {"arrival", "collision", "idle", "arrival_radius", "collision_distance", "z_min", "z_max"}, "layout.reward");
    c.reward = {require(r, "arrival", where).get<double>(),        require(r, "collision", where).get<double>(),
                require(r, "idle", where).get<double>(),           require(r, "arrival_radius", where).get<double>(),
                require(r, "collision_distance", where).get<double>(), require(r, "z_min", where).get<double>(),
                require(r, "z_max", where).get<double>()};
    c.episode_cap = require(j, "episode_cap", where).get<int>();
    c.dt = require(j, "dt", where).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("layout: ") + e.what());
  }
  c.validate();
  return c;
}

inline WorldConfig load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open layout file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("layout " + path + ": " + e.what());
  }
  return layout_from_json(j);
}

inline void save_layout(const WorldConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write layout file " + path);
  out << layout_to_json(c).dump(2) << '\n';
}

}  // namespace pdsac
