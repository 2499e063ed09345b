#pragma once

// Run configuration: every hyperparameter of a training run, loaded from JSON
// with defaults materialised so that a saved config is complete.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "pdsac/errors.hpp"
#include "pdsac/layout.hpp"

namespace pdsac {

enum class Variant { sac, sac_p, pdsac, pdsac_p };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::sac: return "sac";
    case Variant::sac_p: return "sac-p";
    case Variant::pdsac: return "pdsac";
    case Variant::pdsac_p: return "pdsac-p";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "sac") return Variant::sac;
  if (s == "sac-p") return Variant::sac_p;
  if (s == "pdsac") return Variant::pdsac;
  if (s == "pdsac-p") return Variant::pdsac_p;
  throw ConfigError("unknown variant '" + s + "' (expected sac, sac-p, pdsac, pdsac-p)");
}

inline bool is_distributional(Variant v) { return v == Variant::pdsac || v == Variant::pdsac_p; }
inline bool is_prioritized(Variant v) { return v == Variant::sac_p || v == Variant::pdsac_p; }

// The scalar variants are the single-actor baselines; the distributional ones
// use the parallel topology.
inline std::size_t default_explorers(Variant v) { return is_distributional(v) ? 4 : 1; }

inline std::uint64_t default_update_budget(int env_id) {
  switch (env_id) {
    case 2: return 400000;
    case 3: return 600000;
    default: return 200000;
  }
}

struct RunConfig {
  Variant variant = Variant::pdsac_p;
  int env_id = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  std::string layout_path;  // empty: built-in layout for env_id
  bool serial = false;

  struct Network {
    std::size_t hidden_width = 256;
    double policy_output_scale = 1e-3;
    double log_std_min = -20.0;
    double log_std_max = 2.0;
    bool operator==(const Network&) const = default;
  } network;

  struct Sac {
    double gamma = 0.99;
    double tau = 0.005;
    double temperature = 0.2;
    double lr = 3e-4;
    std::size_t batch_size = 256;
    bool operator==(const Sac&) const = default;
  } sac;

  struct Distributional {
    std::size_t atoms = 51;
    double v_min = -40.0;
    double v_max = 250.0;
    bool operator==(const Distributional&) const = default;
  } distributional;

  struct Replay {
    std::size_t capacity = std::size_t{1} << 20;
    double alpha = 0.6;
    double beta_start = 0.4;
    double beta_end = 1.0;
    double priority_eps = 1e-6;
    bool operator==(const Replay&) const = default;
  } replay;

  struct Orchestrator {
    std::size_t explorers = 4;
    bool evaluator = true;
    std::size_t flush_interval = 50;
    std::uint64_t broadcast_interval = 100;
    std::size_t warmup = 5000;
    std::uint64_t update_budget = 200000;
    std::uint64_t env_step_budget = 0;
    std::uint64_t checkpoint_interval = 10000;
    std::size_t eval_window = 100;
    bool operator==(const Orchestrator&) const = default;
  } orchestrator;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (layout_path.empty() && (env_id < 1 || env_id > 3)) fail("env_id must be 1, 2 or 3");
    if (network.hidden_width == 0) fail("network.hidden_width must be positive");
    if (!(network.log_std_min < network.log_std_max)) fail("network.log_std_min must be < log_std_max");
    if (!(sac.gamma > 0.0 && sac.gamma < 1.0)) fail("sac.gamma must lie in (0, 1)");
    if (!(sac.tau > 0.0 && sac.tau <= 1.0)) fail("sac.tau must lie in (0, 1]");
    if (!(sac.temperature > 0.0)) fail("sac.temperature must be > 0");
    if (!(sac.lr > 0.0)) fail("sac.lr must be > 0");
    if (sac.batch_size == 0) fail("sac.batch_size must be positive");
    if (distributional.atoms < 2) fail("distributional.atoms must be >= 2");
    if (!(distributional.v_min < distributional.v_max)) fail("distributional.v_min must be < v_max");
    if (replay.capacity < sac.batch_size) fail("replay.capacity must be >= sac.batch_size");
    if (!(replay.alpha >= 0.0)) fail("replay.alpha must be >= 0");
    if (!(replay.beta_start >= 0.0 && replay.beta_start <= 1.0)) fail("replay.beta_start must lie in [0, 1]");
    if (!(replay.beta_end >= 0.0 && replay.beta_end <= 1.0)) fail("replay.beta_end must lie in [0, 1]");
    if (!(replay.priority_eps > 0.0)) fail("replay.priority_eps must be > 0");
    if (orchestrator.explorers == 0) fail("orchestrator.explorers must be >= 1");
    if (orchestrator.flush_interval == 0) fail("orchestrator.flush_interval must be >= 1");
    if (orchestrator.broadcast_interval == 0) fail("orchestrator.broadcast_interval must be >= 1");
    if (orchestrator.eval_window == 0) fail("orchestrator.eval_window must be >= 1");
  }
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline const nlohmann::json* section(const nlohmann::json& j, const char* key, const std::set<std::string>& allowed) {
  if (!j.contains(key)) return nullptr;
  reject_unknown(j.at(key), allowed, std::string("config.") + key);
  return &j.at(key);
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"env_id", c.env_id},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"layout_path", c.layout_path},
      {"serial", c.serial},
      {"network",
       {{"hidden_width", c.network.hidden_width},
        {"policy_output_scale", c.network.policy_output_scale},
        {"log_std_min", c.network.log_std_min},
        {"log_std_max", c.network.log_std_max}}},
      {"sac",
       {{"gamma", c.sac.gamma},
        {"tau", c.sac.tau},
        {"temperature", c.sac.temperature},
        {"lr", c.sac.lr},
        {"batch_size", c.sac.batch_size}}},
      {"distributional",
       {{"atoms", c.distributional.atoms}, {"v_min", c.distributional.v_min}, {"v_max", c.distributional.v_max}}},
      {"replay",
       {{"capacity", c.replay.capacity},
        {"alpha", c.replay.alpha},
        {"beta_start", c.replay.beta_start},
        {"beta_end", c.replay.beta_end},
        {"priority_eps", c.replay.priority_eps}}},
      {"orchestrator",
       {{"explorers", c.orchestrator.explorers},
        {"evaluator", c.orchestrator.evaluator},
        {"flush_interval", c.orchestrator.flush_interval},
        {"broadcast_interval", c.orchestrator.broadcast_interval},
        {"warmup", c.orchestrator.warmup},
        {"update_budget", c.orchestrator.update_budget},
        {"env_step_budget", c.orchestrator.env_step_budget},
        {"checkpoint_interval", c.orchestrator.checkpoint_interval},
        {"eval_window", c.orchestrator.eval_window}}},
  };
}

// Missing keys take defaults (explorers and update_budget depend on variant and
// environment); unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  detail::reject_unknown(j, {"variant", "env_id", "seed", "output_dir", "layout_path", "serial", "network", "sac",
                             "distributional", "replay", "orchestrator"},
                         "config");
  RunConfig c;
  std::string variant = to_string(c.variant);
  read_field(j, "variant", variant, "config");
  c.variant = parse_variant(variant);
  read_field(j, "env_id", c.env_id, "config");
  read_field(j, "seed", c.seed, "config");
  read_field(j, "output_dir", c.output_dir, "config");
  read_field(j, "layout_path", c.layout_path, "config");
  read_field(j, "serial", c.serial, "config");

  if (auto* s = detail::section(j, "network", {"hidden_width", "policy_output_scale", "log_std_min", "log_std_max"})) {
    read_field(*s, "hidden_width", c.network.hidden_width, "network");
    read_field(*s, "policy_output_scale", c.network.policy_output_scale, "network");
    read_field(*s, "log_std_min", c.network.log_std_min, "network");
    read_field(*s, "log_std_max", c.network.log_std_max, "network");
  }
  if (auto* s = detail::section(j, "sac", {"gamma", "tau", "temperature", "lr", "batch_size"})) {
    read_field(*s, "gamma", c.sac.gamma, "sac");
    read_field(*s, "tau", c.sac.tau, "sac");
    read_field(*s, "temperature", c.sac.temperature, "sac");
    read_field(*s, "lr", c.sac.lr, "sac");
    read_field(*s, "batch_size", c.sac.batch_size, "sac");
  }
  if (auto* s = detail::section(j, "distributional", {"atoms", "v_min", "v_max"})) {
    read_field(*s, "atoms", c.distributional.atoms, "distributional");
    read_field(*s, "v_min", c.distributional.v_min, "distributional");
    read_field(*s, "v_max", c.distributional.v_max, "distributional");
  }
  if (auto* s = detail::section(j, "replay", {"capacity", "alpha", "beta_start", "beta_end", "priority_eps"})) {
    read_field(*s, "capacity", c.replay.capacity, "replay");
    read_field(*s, "alpha", c.replay.alpha, "replay");
    read_field(*s, "beta_start", c.replay.beta_start, "replay");
    read_field(*s, "beta_end", c.replay.beta_end, "replay");
    read_field(*s, "priority_eps", c.replay.priority_eps, "replay");
  }
  c.orchestrator.explorers = default_explorers(c.variant);
  c.orchestrator.update_budget = default_update_budget(c.env_id);
  if (auto* s = detail::section(j, "orchestrator",
                                {"explorers", "evaluator", "flush_interval", "broadcast_interval", "warmup",
                                 "update_budget", "env_step_budget", "checkpoint_interval", "eval_window"})) {
    read_field(*s, "explorers", c.orchestrator.explorers, "orchestrator");
    read_field(*s, "evaluator", c.orchestrator.evaluator, "orchestrator");
    read_field(*s, "flush_interval", c.orchestrator.flush_interval, "orchestrator");
    read_field(*s, "broadcast_interval", c.orchestrator.broadcast_interval, "orchestrator");
    read_field(*s, "warmup", c.orchestrator.warmup, "orchestrator");
    read_field(*s, "update_budget", c.orchestrator.update_budget, "orchestrator");
    read_field(*s, "env_step_budget", c.orchestrator.env_step_budget, "orchestrator");
    read_field(*s, "checkpoint_interval", c.orchestrator.checkpoint_interval, "orchestrator");
    read_field(*s, "eval_window", c.orchestrator.eval_window, "orchestrator");
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << config_to_json(c).dump(2) << '\n';
}

// FNV-1a over the canonical (sorted-key, compact) JSON form, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline WorldConfig world_for(const RunConfig& c) {
  return c.layout_path.empty() ? make_environment(c.env_id) : load_layout(c.layout_path);
}

}  // namespace pdsac
