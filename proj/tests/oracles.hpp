#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <array>
#include <cmath>
#include <numbers>

#include "pdsac/dsac.hpp"
#include "pdsac/replay.hpp"
#include "pdsac/sac.hpp"
#include "pdsac/world.hpp"
#include "test_support.hpp"

namespace pdsac::testing {

// Marches each beam in 1 mm increments until it leaves the room, enters a box
// cut by the scan plane, or reaches max range.
inline std::array<double, kLidarBeams> ray_march(const Pose& pose, const WorldConfig& c) {
  std::array<double, kLidarBeams> out{};
  const auto blocked = [&](double x, double y) {
    if (std::abs(x) >= c.room_half_extent || std::abs(y) >= c.room_half_extent) return true;
    for (const Box& b : c.obstacles) {
      const Vec3 lo = b.lo(), hi = b.hi();
      if (pose.z < lo.z || pose.z > hi.z) continue;
      if (x >= lo.x && x <= hi.x && y >= lo.y && y <= hi.y) return true;
    }
    return false;
  };
  if (blocked(pose.x, pose.y)) return out;
  constexpr double kStep = 1e-3;
  for (std::size_t i = 0; i < kLidarBeams; ++i) {
    const double a = pose.yaw - c.lidar.fov / 2 + c.lidar.fov * static_cast<double>(i) / 22.0;
    const double dx = std::cos(a), dy = std::sin(a);
    double t = 0.0;
    while (t < c.lidar.max_range && !blocked(pose.x + t * dx, pose.y + t * dy)) t += kStep;
    out[i] = std::min(t, c.lidar.max_range);
  }
  return out;
}

// Worst per-beam gap between the raycaster and the ray march over random poses.
inline double lidar_worst_error(int env, int poses, std::uint64_t seed) {
  const WorldConfig c = make_environment(env);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(env)));
  double worst = 0.0;
  for (int k = 0; k < poses; ++k) {
    const Pose p{rng.uniform(-4.9, 4.9), rng.uniform(-4.9, 4.9), rng.uniform(0.2, 4.0), rng.uniform(-3.14, 3.14)};
    const auto got = raycast_lidar(p, c);
    const auto want = ray_march(p, c);
    for (std::size_t i = 0; i < kLidarBeams; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  return worst;
}

inline double reward_oracle(double goal_dist, double min_range, double z) {
  if (goal_dist < 0.85) return 200.0;
  if (min_range < 0.65 || z < 0.2 || z > 4.0) return -20.0;
  return 0.0;
}

struct GridResult {
  int cases = 0;
  int reward_mismatches = 0;
  int outcome_mismatches = 0;
};

// Boundary-dense grid over (goal_dist, min_range, z).
inline GridResult reward_grid() {
  const WorldConfig c = make_environment(1);
  const double dists[] = {0.0, 0.3, 0.8499999999, 0.85, 0.8500000001, 2.0, 12.0};
  const double ranges[] = {0.0, 0.3, 0.6499999999, 0.65, 0.6500000001, 3.0, 10.0};
  const double zs[] = {-1.0, 0.0, 0.1999999999, 0.2, 0.2000000001, 2.0, 3.9999999999, 4.0, 4.0000000001, 6.0};
  GridResult g;
  for (double d : dists)
    for (double mr : ranges)
      for (double z : zs) {
        Observation o;
        o.ranges.fill(10.0);
        o.ranges[7] = mr;
        o.goal_dist = d;
        const RewardResult r = compute_reward(o, z, c);
        const double want = reward_oracle(d, mr, z);
        const Outcome expect = want == 200.0 ? Outcome::arrived : want == -20.0 ? Outcome::collided : Outcome::running;
        g.reward_mismatches += r.reward != want;
        g.outcome_mismatches += r.outcome != expect;
        ++g.cases;
      }
  return g;
}

// Triangular-kernel form of the projection: atom i receives
// p_j * max(0, 1 - |clip(r + g z_j) - z_i| / delta) from every source atom j.
inline Matrix brute_force_projection(const AtomSupport& s, double r, double done, double gamma, const Vector& p) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Matrix m = Matrix::Zero(n, 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double tz = std::clamp(r + gamma * (1 - done) * s.atoms()(j), s.v_min(), s.v_max());
    for (Eigen::Index i = 0; i < n; ++i)
      m(i, 0) += p(j) * std::max(0.0, 1.0 - std::abs(tz - s.atoms()(i)) / s.delta());
  }
  return m;
}

inline Vector random_simplex(Rng& rng, Eigen::Index n) {
  Vector p(n);
  for (Eigen::Index i = 0; i < n; ++i) p(i) = rng.uniform() < 0.2 ? 0.0 : -std::log(1 - rng.uniform());
  if (p.sum() == 0) p(0) = 1;
  return p / p.sum();
}

struct ProjectionResult {
  double worst_abs = 0.0;
  double worst_mass = 0.0;
  double min_mass = 0.0;
};

inline ProjectionResult projection_errors(int cases, std::uint64_t seed) {
  const AtomSupport s(51, -40.0, 250.0);
  Rng rng(seed);
  ProjectionResult out;
  for (int k = 0; k < cases; ++k) {
    const double r = rng.uniform() < 0.1 ? (rng.uniform() < 0.5 ? 200.0 : -20.0) : rng.uniform(-60.0, 260.0);
    const double done = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const double gamma = rng.uniform(0.0, 1.0);
    const Vector p = random_simplex(rng, 51);
    const Matrix got = project_target(s, Vector::Constant(1, r), Vector::Constant(1, done), gamma, p);
    const Matrix want = brute_force_projection(s, r, done, gamma, p);
    out.worst_abs = std::max(out.worst_abs, (got - want).cwiseAbs().maxCoeff());
    out.worst_mass = std::max(out.worst_mass, std::abs(got.sum() - 1.0));
    out.min_mass = std::min(out.min_mass, got.minCoeff());
  }
  return out;
}

inline Batch random_batch(Rng& rng, Eigen::Index n, std::size_t obs_dim) {
  Batch b;
  b.obs = random_matrix(rng, static_cast<Eigen::Index>(obs_dim), n);
  b.next_obs = random_matrix(rng, static_cast<Eigen::Index>(obs_dim), n);
  b.actions = random_matrix(rng, kActionSize, n, 0.95);
  b.rewards = random_matrix(rng, n, 1, 3.0).col(0);
  b.dones = Vector::Zero(n);
  b.weights = Vector::Ones(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    b.dones(j) = rng.uniform() < 0.3 ? 1.0 : 0.0;
    b.weights(j) = rng.uniform(0.2, 1.0);
  }
  return b;
}

// Worst relative finite-difference errors for one seed. `weights` covers the
// plain regression losses (critics, value, bare network), `composite` the
// policy objectives that chain through the sampler and the critics.
struct GradientErrors {
  double weights = 0.0;
  double composite = 0.0;
};

inline double mlp_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  const Mlp net({6, 12, 9, 4});
  ParamSet p = net.init(rng);
  const Matrix x = random_matrix(rng, 6, 5);
  const Matrix c = random_matrix(rng, 4, 5);
  const auto loss = [&] { return (net.forward(p, x).array() * c.array()).sum(); };
  Tape tape;
  net.forward(p, x, tape);
  ParamSet g = p.zeros_like();
  net.backward(p, tape, c, &g);
  return max_fd_error(p, g, loss, 1e-6, 200);
}

inline GradientErrors sac_gradient_errors(std::uint64_t seed, std::size_t obs = 5, std::size_t hidden = 8) {
  Rng rng(10 + seed);
  SacNets nets = SacNets::create(obs, hidden, rng, 0.5);
  nets.value_target = nets.value_net.init(rng);
  const Batch b = random_batch(rng, 5, obs);
  const Matrix noise = random_matrix(rng, kActionSize, 5, 1.5);
  SoftActorCriticConfig cfg;
  cfg.temperature = 0.4;
  const SacGradients g = sac_losses(nets, b, noise, cfg);
  SacNets probe = nets;
  const auto report = [&] { return sac_losses(probe, b, noise, cfg).report; };
  GradientErrors e;
  e.weights = std::max({max_fd_error(probe.q1, g.q1, [&] { return report().q1_loss; }),
                        max_fd_error(probe.q2, g.q2, [&] { return report().q2_loss; }),
                        max_fd_error(probe.value, g.value, [&] { return report().value_loss; })});
  e.composite = max_fd_error(probe.policy, g.policy, [&] { return report().policy_loss; });
  return e;
}

inline DsacConfig small_dsac_config() {
  DsacConfig c;
  c.atoms = 11;
  c.v_min = -5;
  c.v_max = 15;
  c.sac.temperature = 0.3;
  return c;
}

inline GradientErrors dsac_gradient_errors(std::uint64_t seed, std::size_t obs = 5, std::size_t hidden = 8) {
  const DsacConfig cfg = small_dsac_config();
  const AtomSupport support(cfg.atoms, cfg.v_min, cfg.v_max);
  Rng rng(200 + seed);
  DsacNets nets = DsacNets::create(obs, hidden, cfg.atoms, rng, 0.5);
  nets.z1_target = nets.critic_net.init(rng);
  const Batch b = random_batch(rng, 5, obs);
  const Matrix noise = random_matrix(rng, kActionSize, 5, 1.5);
  const Matrix noise_next = random_matrix(rng, kActionSize, 5, 1.5);
  const DsacGradients g = dsac_losses(nets, b, noise, noise_next, cfg, support);
  DsacNets probe = nets;
  const auto report = [&] { return dsac_losses(probe, b, noise, noise_next, cfg, support).report; };
  GradientErrors e;
  e.weights = std::max({max_fd_error(probe.z1, g.z1, [&] { return report().q1_loss; }),
                        max_fd_error(probe.z2, g.z2, [&] { return report().q2_loss; }),
                        max_fd_error(probe.value, g.value, [&] { return report().value_loss; })});
  e.composite = max_fd_error(probe.policy, g.policy, [&] { return report().policy_loss; });
  return e;
}

// Two-state MDP with actions chosen by the sign of the first action component.
// s0: a0 -> r 1, stay; a1 -> r 0, go to s1. s1: a0 -> r 0, go to s0; a1 -> r 4, stay.
struct ToyStep {
  int next;
  double reward;
};

inline ToyStep toy_step(int s, bool a1) {
  if (s == 0) return a1 ? ToyStep{1, 0.0} : ToyStep{0, 1.0};
  return a1 ? ToyStep{1, 4.0} : ToyStep{0, 0.0};
}

inline std::array<int, 2> value_iteration_greedy(double gamma) {
  double v[2] = {0, 0};
  for (int it = 0; it < 200; ++it) {
    double nv[2];
    for (int s = 0; s < 2; ++s) {
      const ToyStep x0 = toy_step(s, false), x1 = toy_step(s, true);
      nv[s] = std::max(x0.reward + gamma * v[x0.next], x1.reward + gamma * v[x1.next]);
    }
    v[0] = nv[0], v[1] = nv[1];
  }
  std::array<int, 2> pi{};
  for (int s = 0; s < 2; ++s) {
    const ToyStep x0 = toy_step(s, false), x1 = toy_step(s, true);
    pi[s] = (x1.reward + gamma * v[x1.next] > x0.reward + gamma * v[x0.next]) ? 1 : 0;
  }
  return pi;
}

constexpr double kToyGamma = 0.5;

// Trains scalar SAC on uniformly drawn one-hot transitions and returns the
// greedy action per state after `updates` updates.
inline std::array<int, 2> train_toy_sac(std::uint64_t seed, int updates = 500) {
  Rng rng(seed);
  SoftActorCriticConfig cfg;
  cfg.gamma = kToyGamma;
  cfg.tau = 0.05;
  cfg.temperature = 0.01;
  cfg.adam.lr = 3e-3;
  SacLearner learner(SacNets::create(2, 32, rng), cfg, derive_seed(seed, 1));
  for (int u = 0; u < updates; ++u) {
    Batch b;
    const Eigen::Index n = 64;
    b.obs = Matrix::Zero(2, n);
    b.next_obs = Matrix::Zero(2, n);
    b.actions = random_matrix(rng, kActionSize, n, 0.999);
    b.rewards.resize(n);
    b.dones = Vector::Zero(n);
    b.weights = Vector::Ones(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int s = static_cast<int>(rng.below(2));
      const ToyStep x = toy_step(s, b.actions(0, j) > 0);
      b.obs(s, j) = 1;
      b.next_obs(x.next, j) = 1;
      b.rewards(j) = x.reward;
    }
    learner.update(b);
  }
  std::array<int, 2> greedy{};
  for (int s = 0; s < 2; ++s) {
    std::array<double, 2> f{};
    f[static_cast<std::size_t>(s)] = 1;
    Rng unused(0);
    const auto raw = select_raw_action(learner.policy_net(), learner.policy_params(), f, ActionMode::evaluate, unused);
    greedy[static_cast<std::size_t>(s)] = raw[0] > 0 ? 1 : 0;
  }
  return greedy;
}

// Sum-tree checks.

inline bool sum_tree_invariant_holds(int sequences, std::uint64_t seed) {
  Rng rng(seed);
  for (int seq = 0; seq < sequences; ++seq) {
    const std::size_t cap = std::size_t{1} << rng.below(7);
    SumTree t(cap);
    std::vector<double> leaves(cap, 0.0);
    const int ops = 1 + static_cast<int>(rng.below(40));
    for (int k = 0; k < ops; ++k) {
      const std::size_t i = rng.below(cap);
      const double p = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.0, 10.0);
      t.set(i, p);
      leaves[i] = p;
    }
    const auto& n = t.nodes();
    for (std::size_t i = 0; i + 1 < cap; ++i)
      if (n[i] != n[2 * i + 1] + n[2 * i + 2]) return false;
    double sum = 0.0;
    for (std::size_t i = 0; i < cap; ++i) {
      if (t.leaf(i) != leaves[i]) return false;
      sum += leaves[i];
    }
    if (std::abs(t.total() - sum) > 1e-12 * std::max(1.0, sum)) return false;
  }
  return true;
}

inline Transition tagged_transition(double tag) {
  Transition t;
  t.reward = tag;
  t.obs.goal_dist = tag;
  t.next_obs.goal_dist = tag + 0.5;
  t.action = {tag / 100, -tag / 100, 0.0};
  t.done = static_cast<long>(tag) % 3 == 0;
  return t;
}

// Largest |empirical - p^a / sum p^a| over 16 leaves.
inline double sampling_frequency_error(int draws, std::uint64_t seed) {
  const double alpha = 0.6;
  ReplayBuffer b({16, alpha, 1e-6});
  std::vector<std::size_t> idx;
  std::vector<double> td;
  for (int i = 0; i < 16; ++i) {
    idx.push_back(b.push(tagged_transition(i)));
    td.push_back(0.1 + 0.37 * i * (i % 3 + 1));
  }
  b.update_priorities(idx, td);
  double z = 0.0;
  std::vector<double> expect(16);
  for (int i = 0; i < 16; ++i) z += expect[i] = std::pow(td[i] + 1e-6, alpha);
  Rng rng(seed);
  std::vector<double> counts(16, 0.0);
  const int batch = 16;
  for (int k = 0; k < draws / batch; ++k)
    for (std::size_t i : b.sample_prioritized(batch, 0.4, rng).indices) counts[i] += 1;
  double worst = 0.0;
  for (int i = 0; i < 16; ++i) worst = std::max(worst, std::abs(counts[i] / (draws / batch * batch) - expect[i] / z));
  return worst;
}

// Chi-square statistic of alpha = 0 sampling over 100 leaves with distinct errors.
inline double alpha_zero_chi_square(int draws, std::uint64_t seed) {
  ReplayBuffer b({128, 0.0, 1e-6});
  std::vector<std::size_t> idx;
  std::vector<double> td;
  for (int i = 0; i < 100; ++i) {
    idx.push_back(b.push(tagged_transition(i)));
    td.push_back(i * 0.5);
  }
  b.update_priorities(idx, td);
  Rng rng(seed);
  std::vector<double> counts(100, 0.0);
  for (int k = 0; k < draws; ++k) counts[b.sample_prioritized(1, 0.4, rng).indices[0]] += 1;
  const double e = draws / 100.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - e) * (c - e) / e;
  return chi2;
}

// Central 99% band of chi-square with 99 degrees of freedom.
constexpr double kChi2Lower = 66.51;
constexpr double kChi2Upper = 138.99;

}  // namespace pdsac::testing
