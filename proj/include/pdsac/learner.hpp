#pragma once

// Pieces shared by the scalar and distributional learners.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pdsac/approximator.hpp"
#include "pdsac/checkpoint.hpp"
#include "pdsac/replay.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

// Column-major minibatch in feature space.
struct Batch {
  Matrix obs;       // obs_dim x B
  Matrix actions;   // 3 x B, raw in [-1, 1]
  Vector rewards;   // B
  Matrix next_obs;  // obs_dim x B
  Vector dones;     // B, 0 or 1
  Vector weights;   // B, importance-sampling weights

  Eigen::Index size() const { return rewards.size(); }
};

// Maps an observation to network inputs of order one.
struct FeatureEncoder {
  double range_scale = 10.0;
  double distance_scale = 10.0;
  double dz_scale = 4.0;

  static FeatureEncoder for_world(const WorldConfig& c) {
    FeatureEncoder e;
    e.range_scale = c.lidar.max_range;
    e.distance_scale = 2.0 * c.room_half_extent;
    e.dz_scale = c.reward.z_max;
    return e;
  }

  std::array<double, kObservationSize> encode(const Observation& o) const {
    std::array<double, kObservationSize> f{};
    for (std::size_t i = 0; i < kLidarBeams; ++i) f[i] = o.ranges[i] / range_scale;
    f[kLidarBeams] = o.goal_dist / distance_scale;
    f[kLidarBeams + 1] = o.goal_angle / std::numbers::pi;
    f[kLidarBeams + 2] = o.goal_dz / dz_scale;
    return f;
  }
};

inline Batch make_batch(const PrioritizedBatch& pb, const FeatureEncoder& enc) {
  const auto b = static_cast<Eigen::Index>(pb.transitions.size());
  Batch out;
  out.obs.resize(kObservationSize, b);
  out.next_obs.resize(kObservationSize, b);
  out.actions.resize(kActionSize, b);
  out.rewards.resize(b);
  out.dones.resize(b);
  out.weights.resize(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Transition& t = pb.transitions[j];
    const auto f = enc.encode(t.obs), g = enc.encode(t.next_obs);
    for (std::size_t k = 0; k < kObservationSize; ++k) {
      out.obs(k, j) = f[k];
      out.next_obs(k, j) = g[k];
    }
    for (std::size_t k = 0; k < kActionSize; ++k) out.actions(k, j) = t.action[k];
    out.rewards(j) = t.reward;
    out.dones(j) = t.done ? 1.0 : 0.0;
    out.weights(j) = pb.is_weights[j];
  }
  return out;
}

inline Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m.topRows(top.rows()) = top;
  m.bottomRows(bottom.rows()) = bottom;
  return m;
}

inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

enum class ActionMode { explore, evaluate };

// Raw action in (-1, 1)^3: a tanh-squashed sample when exploring, tanh(mean)
// when evaluating (no randomness consumed).
inline std::array<double, kActionSize> select_raw_action(const Mlp& policy_net, const ParamSet& policy,
                                                         std::span<const double> features, ActionMode mode,
                                                         Rng& rng, LogStdBounds bounds = {}) {
  Matrix x(static_cast<Eigen::Index>(features.size()), 1);
  for (std::size_t k = 0; k < features.size(); ++k) x(static_cast<Eigen::Index>(k), 0) = features[k];
  const PolicyOutput head = split_policy_head(policy_net.forward(policy, x), bounds);
  std::array<double, kActionSize> raw{};
  if (mode == ActionMode::evaluate) {
    for (std::size_t k = 0; k < kActionSize; ++k) raw[k] = std::tanh(head.mean(static_cast<Eigen::Index>(k), 0));
    return raw;
  }
  const SquashedSample s = squash_sample(head, standard_normal(rng, kActionSize, 1));
  for (std::size_t k = 0; k < kActionSize; ++k) raw[k] = s.action(static_cast<Eigen::Index>(k), 0);
  return raw;
}

inline Action select_action(const Mlp& policy_net, const ParamSet& policy, const Observation& obs,
                            const FeatureEncoder& enc, ActionMode mode, Rng& rng, LogStdBounds bounds = {}) {
  const auto f = enc.encode(obs);
  return Action::from_raw(select_raw_action(policy_net, policy, f, mode, rng, bounds));
}

struct LossReport {
  double policy_loss = 0.0;
  double critic_loss = 0.0;  // mean of the twin critic losses
  double value_loss = 0.0;
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  std::vector<double> td_errors;  // priority signal per sample
};

inline bool all_finite(const LossReport& r) {
  if (!std::isfinite(r.policy_loss) || !std::isfinite(r.critic_loss) || !std::isfinite(r.value_loss)) return false;
  for (double d : r.td_errors)
    if (!std::isfinite(d)) return false;
  return true;
}

// Hyperparameters shared by both learners.
struct SoftActorCriticConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double temperature = 0.2;
  AdamConfig adam{};
  LogStdBounds log_std{};
};

// What the orchestrator needs from a learner. The learner is the only writer
// of its parameters; actors receive copies of policy_params().
class Learner {
 public:
  virtual ~Learner() = default;

  virtual LossReport update(const Batch& batch) = 0;
  virtual const Mlp& policy_net() const = 0;
  virtual const ParamSet& policy_params() const = 0;
  virtual std::vector<NamedParams> parameters() const = 0;
  virtual void restore(const std::vector<NamedParams>& sets) = 0;
  virtual std::uint64_t update_count() const = 0;
  virtual LogStdBounds log_std_bounds() const = 0;
};

// Importance-weighted batch mean: sum_i w_i x_i / B.
inline double weighted_mean(const Vector& w, const Vector& x) { return w.dot(x) / static_cast<double>(w.size()); }

}  // namespace pdsac
