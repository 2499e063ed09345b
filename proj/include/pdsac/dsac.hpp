#pragma once

// Distributional soft actor-critic. The twin critics output softmax masses over
// a fixed atom support and are trained by KL divergence to the categorical
// projection of the soft Bellman target; the policy and the state-value network
// consume the critics' means.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pdsac/approximator.hpp"
#include "pdsac/errors.hpp"
#include "pdsac/learner.hpp"

namespace pdsac {

class AtomSupport {
 public:
  AtomSupport(std::size_t n, double v_min, double v_max) : n_(n), v_min_(v_min), v_max_(v_max) {
    if (n < 2) throw ConfigError("atom support needs at least 2 atoms");
    if (!(v_min < v_max)) throw ConfigError("atom support needs v_min < v_max");
    delta_ = (v_max - v_min) / static_cast<double>(n - 1);
    atoms_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) atoms_(static_cast<Eigen::Index>(i)) = v_min + delta_ * static_cast<double>(i);
    atoms_(static_cast<Eigen::Index>(n - 1)) = v_max;
  }

  std::size_t size() const { return n_; }
  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  double delta() const { return delta_; }
  const Vector& atoms() const { return atoms_; }

 private:
  std::size_t n_;
  double v_min_, v_max_, delta_;
  Vector atoms_;
};

// Column-wise softmax.
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double m = p.col(j).maxCoeff();
    p.col(j) = (p.col(j).array() - m).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

inline Matrix log_softmax_columns(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double m = out.col(j).maxCoeff();
    const double lse = m + std::log((out.col(j).array() - m).exp().sum());
    out.col(j).array() -= lse;
  }
  return out;
}

// Mean return of each column of masses.
inline Vector expected_q(const Matrix& masses, const AtomSupport& support) {
  return (support.atoms().transpose() * masses).transpose();
}

// Categorical projection of r + gamma * (1 - done) * z onto the support: each
// shifted atom is clipped to [v_min, v_max] and its mass split linearly between
// the two neighbouring atoms. next_masses is N x B.
inline Matrix project_target(const AtomSupport& support, const Vector& rewards, const Vector& dones, double gamma,
                             const Matrix& next_masses) {
  const auto n = static_cast<Eigen::Index>(support.size());
  if (next_masses.rows() != n || next_masses.cols() != rewards.size() || dones.size() != rewards.size())
    throw ShapeError("project_target: shape mismatch");
  const Vector& z = support.atoms();
  const double last = static_cast<double>(n - 1);
  Matrix m = Matrix::Zero(n, next_masses.cols());
  for (Eigen::Index j = 0; j < next_masses.cols(); ++j) {
    const double discount = gamma * (1.0 - dones(j));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = next_masses(i, j);
      if (p == 0.0) continue;
      const double tz = std::clamp(rewards(j) + discount * z(i), support.v_min(), support.v_max());
      const double b = std::clamp((tz - support.v_min()) / support.delta(), 0.0, last);
      const double lo = std::floor(b), hi = std::ceil(b);
      const auto l = static_cast<Eigen::Index>(lo), u = static_cast<Eigen::Index>(hi);
      if (l == u) {
        m(l, j) += p;
      } else {
        m(l, j) += p * (hi - b);
        m(u, j) += p * (b - lo);
      }
    }
  }
  return m;
}

inline constexpr double kKlProbabilityFloor = 1e-10;

struct KlResult {
  double loss = 0.0;
  std::vector<double> per_sample;
};

// Importance-weighted mean of KL(target || pred) per column, pred clamped
// below at 1e-10. Both arguments are N x B masses.
inline KlResult kl_loss(const Matrix& pred, const Matrix& target, const Vector& weights) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || weights.size() != pred.cols())
    throw ShapeError("kl_loss: shape mismatch");
  KlResult r;
  r.per_sample.resize(static_cast<std::size_t>(pred.cols()));
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double t = target(i, j);
      if (t > 0.0) kl += t * (std::log(t) - std::log(std::max(pred(i, j), kKlProbabilityFloor)));
    }
    r.per_sample[static_cast<std::size_t>(j)] = kl;
    r.loss += weights(j) * kl;
  }
  r.loss /= static_cast<double>(pred.cols());
  return r;
}

// Gradient of kl_loss with respect to critic logits (softmax head), honouring
// the probability floor.
inline Matrix kl_loss_grad_logits(const Matrix& logits, const Matrix& target, const Vector& weights) {
  const Matrix log_q = log_softmax_columns(logits);
  const Matrix q = log_q.array().exp().matrix();
  const double log_floor = std::log(kKlProbabilityFloor);
  const double inv_b = 1.0 / static_cast<double>(logits.cols());
  Matrix g(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Vector d_log_q(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      d_log_q(i) = (log_q(i, j) > log_floor) ? -target(i, j) * weights(j) * inv_b : 0.0;
    const double s = d_log_q.sum();
    g.col(j) = d_log_q - q.col(j) * s;
  }
  return g;
}

struct DsacConfig {
  SoftActorCriticConfig sac{};
  std::size_t atoms = 51;
  double v_min = -40.0;
  double v_max = 250.0;
};

struct DsacNets {
  Mlp policy_net;
  Mlp critic_net;  // logits over the atoms
  Mlp value_net;
  ParamSet policy;
  ParamSet z1;
  ParamSet z2;
  ParamSet z1_target;
  ParamSet z2_target;
  ParamSet value;

  static DsacNets create(std::size_t obs_dim, std::size_t hidden, std::size_t atoms, Rng& rng,
                         double policy_output_scale = 1e-3) {
    DsacNets n;
    n.policy_net = Mlp({obs_dim, hidden, hidden, hidden, 2 * kActionSize});
    n.critic_net = Mlp({obs_dim + kActionSize, hidden, hidden, hidden, atoms});
    n.value_net = Mlp({obs_dim, hidden, hidden, hidden, 1});
    n.policy = n.policy_net.init(rng, policy_output_scale);
    n.z1 = n.critic_net.init(rng);
    n.z2 = n.critic_net.init(rng);
    n.value = n.value_net.init(rng);
    n.z1_target = n.z1;
    n.z2_target = n.z2;
    n.z1_target.set_version(0);
    n.z2_target.set_version(0);
    return n;
  }
};

// Per column, the masses of whichever of two critics has the lower mean.
struct MinMeanSelection {
  Matrix masses;
  Vector mean;
  std::vector<bool> first;  // true where critic 1 was chosen
};

inline MinMeanSelection select_min_mean(const Matrix& m1, const Matrix& m2, const AtomSupport& support) {
  const Vector e1 = expected_q(m1, support), e2 = expected_q(m2, support);
  MinMeanSelection s{Matrix(m1.rows(), m1.cols()), Vector(m1.cols()), std::vector<bool>(m1.cols())};
  for (Eigen::Index j = 0; j < m1.cols(); ++j) {
    const bool one = e1(j) <= e2(j);
    s.first[static_cast<std::size_t>(j)] = one;
    s.masses.col(j) = one ? m1.col(j) : m2.col(j);
    s.mean(j) = one ? e1(j) : e2(j);
  }
  return s;
}

// Projected soft target: the next-state distribution of the lower-mean target
// critic at a'' ~ pi(.|s'), shifted by the entropy bonus folded into the reward.
inline Matrix dsac_target_distribution(const DsacNets& nets, const Batch& b, const Matrix& noise_next,
                                       const DsacConfig& cfg, const AtomSupport& support) {
  const SoftActorCriticConfig& c = cfg.sac;
  const Matrix raw = nets.policy_net.forward(nets.policy, b.next_obs);
  const SquashedSample a = squash_sample(split_policy_head(raw, c.log_std), noise_next);
  const Matrix sa = concat_rows(b.next_obs, a.action);
  const Matrix m1 = softmax_columns(nets.critic_net.forward(nets.z1_target, sa));
  const Matrix m2 = softmax_columns(nets.critic_net.forward(nets.z2_target, sa));
  const MinMeanSelection sel = select_min_mean(m1, m2, support);
  const Vector not_done = Vector::Ones(b.size()) - b.dones;
  const Vector r_eff = b.rewards - c.gamma * c.temperature * not_done.cwiseProduct(a.log_prob);
  return project_target(support, r_eff, b.dones, c.gamma, sel.masses);
}

struct DsacGradients {
  ParamSet policy;
  ParamSet z1;
  ParamSet z2;
  ParamSet value;
  LossReport report;
  double advantage = 0.0;  // batch mean of Q - V at the sampled actions
};

// Losses and gradients at the current parameters. noise is the policy noise
// at s, noise_next at s' (both 3 x B).
inline DsacGradients dsac_losses(const DsacNets& nets, const Batch& b, const Matrix& noise, const Matrix& noise_next,
                                 const DsacConfig& cfg, const AtomSupport& support) {
  const SoftActorCriticConfig& c = cfg.sac;
  const Eigen::Index n = b.size();
  const double inv_b = 1.0 / static_cast<double>(n);
  DsacGradients g{nets.policy.zeros_like(), nets.z1.zeros_like(), nets.z2.zeros_like(), nets.value.zeros_like(), {}, 0.0};

  // Critics: KL to the projected target.
  const Matrix target = dsac_target_distribution(nets, b, noise_next, cfg, support);
  const Matrix sa = concat_rows(b.obs, b.actions);
  Tape t1, t2;
  const Matrix l1 = nets.critic_net.forward(nets.z1, sa, t1);
  const Matrix l2 = nets.critic_net.forward(nets.z2, sa, t2);
  const KlResult k1 = kl_loss(softmax_columns(l1), target, b.weights);
  const KlResult k2 = kl_loss(softmax_columns(l2), target, b.weights);
  g.report.q1_loss = k1.loss;
  g.report.q2_loss = k2.loss;
  g.report.critic_loss = 0.5 * (k1.loss + k2.loss);
  nets.critic_net.backward(nets.z1, t1, kl_loss_grad_logits(l1, target, b.weights), &g.z1);
  nets.critic_net.backward(nets.z2, t2, kl_loss_grad_logits(l2, target, b.weights), &g.z2);
  g.report.td_errors.resize(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < g.report.td_errors.size(); ++j)
    g.report.td_errors[j] = 0.5 * (k1.per_sample[j] + k2.per_sample[j]);

  // Policy through the lower-mean online critic.
  Tape tp;
  const Matrix raw = nets.policy_net.forward(nets.policy, b.obs, tp);
  const SquashedSample a = squash_sample(split_policy_head(raw, c.log_std), noise);
  const Matrix sa_new = concat_rows(b.obs, a.action);
  Tape tn1, tn2;
  const Matrix ln1 = nets.critic_net.forward(nets.z1, sa_new, tn1);
  const Matrix ln2 = nets.critic_net.forward(nets.z2, sa_new, tn2);
  const Matrix pn1 = softmax_columns(ln1), pn2 = softmax_columns(ln2);
  const MinMeanSelection online = select_min_mean(pn1, pn2, support);
  g.report.policy_loss = weighted_mean(b.weights, c.temperature * a.log_prob - online.mean);

  // d(-E[Z])/dlogits = -p * (z - E[Z]), routed to the selected critic.
  const auto atoms = static_cast<Eigen::Index>(support.size());
  Matrix d1 = Matrix::Zero(atoms, n), d2 = Matrix::Zero(atoms, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool one = online.first[static_cast<std::size_t>(j)];
    const Matrix& p = one ? pn1 : pn2;
    const double scale = -b.weights(j) * inv_b;
    (one ? d1 : d2).col(j) = scale * p.col(j).cwiseProduct((support.atoms().array() - online.mean(j)).matrix());
  }
  const Matrix din = nets.critic_net.backward(nets.z1, tn1, d1, nullptr) + nets.critic_net.backward(nets.z2, tn2, d2, nullptr);
  const Vector d_log_prob = c.temperature * b.weights * inv_b;
  const Matrix d_raw = squash_backward(raw, noise, a, din.bottomRows(kActionSize), d_log_prob, c.log_std);
  nets.policy_net.backward(nets.policy, tp, d_raw, &g.policy);

  // Soft state value from the target critics at the same a'.
  const Matrix pb1 = softmax_columns(nets.critic_net.forward(nets.z1_target, sa_new));
  const Matrix pb2 = softmax_columns(nets.critic_net.forward(nets.z2_target, sa_new));
  const Vector v_target = select_min_mean(pb1, pb2, support).mean - c.temperature * a.log_prob;
  Tape tv;
  const Vector v = nets.value_net.forward(nets.value, b.obs, tv).row(0).transpose();
  const Vector ev = v - v_target;
  g.report.value_loss = 0.5 * weighted_mean(b.weights, ev.cwiseProduct(ev));
  nets.value_net.backward(nets.value, tv, (b.weights.cwiseProduct(ev) * inv_b).transpose(), &g.value);
  g.advantage = (online.mean - v).mean();
  return g;
}

class DsacLearner final : public Learner {
 public:
  DsacLearner(DsacNets nets, DsacConfig cfg, std::uint64_t seed)
      : nets_(std::move(nets)),
        cfg_(cfg),
        support_(cfg.atoms, cfg.v_min, cfg.v_max),
        rng_(seed),
        adam_policy_(AdamState::for_params(nets_.policy)),
        adam_z1_(AdamState::for_params(nets_.z1)),
        adam_z2_(AdamState::for_params(nets_.z2)),
        adam_value_(AdamState::for_params(nets_.value)) {
    if (nets_.critic_net.output_size() != cfg.atoms) throw ShapeError("critic head width != atom count");
  }

  LossReport update(const Batch& b) override {
    const Matrix noise = standard_normal(rng_, kActionSize, b.size());
    const Matrix noise_next = standard_normal(rng_, kActionSize, b.size());
    DsacGradients g = dsac_losses(nets_, b, noise, noise_next, cfg_, support_);
    if (!all_finite(g.report) || !g.policy.all_finite() || !g.z1.all_finite() || !g.z2.all_finite() ||
        !g.value.all_finite())
      throw TrainingFault("non-finite DSAC loss at update " + std::to_string(updates_));
    adam_step(nets_.z1, g.z1, adam_z1_, cfg_.sac.adam);
    adam_step(nets_.z2, g.z2, adam_z2_, cfg_.sac.adam);
    adam_step(nets_.value, g.value, adam_value_, cfg_.sac.adam);
    adam_step(nets_.policy, g.policy, adam_policy_, cfg_.sac.adam);
    soft_update(nets_.z1_target, nets_.z1, cfg_.sac.tau);
    soft_update(nets_.z2_target, nets_.z2, cfg_.sac.tau);
    nets_.z1_target.advance_version();
    nets_.z2_target.advance_version();
    ++updates_;
    return std::move(g.report);
  }

  const Mlp& policy_net() const override { return nets_.policy_net; }
  const ParamSet& policy_params() const override { return nets_.policy; }
  std::uint64_t update_count() const override { return updates_; }
  LogStdBounds log_std_bounds() const override { return cfg_.sac.log_std; }

  std::vector<NamedParams> parameters() const override {
    return {{"policy", nets_.policy},       {"z1", nets_.z1},
            {"z2", nets_.z2},               {"z1_target", nets_.z1_target},
            {"z2_target", nets_.z2_target}, {"value", nets_.value}};
  }

  void restore(const std::vector<NamedParams>& sets) override {
    nets_.policy = find_params(sets, "policy");
    nets_.z1 = find_params(sets, "z1");
    nets_.z2 = find_params(sets, "z2");
    nets_.z1_target = find_params(sets, "z1_target");
    nets_.z2_target = find_params(sets, "z2_target");
    nets_.value = find_params(sets, "value");
    nets_.policy_net.check(nets_.policy);
    for (const ParamSet* p : {&nets_.z1, &nets_.z2, &nets_.z1_target, &nets_.z2_target}) nets_.critic_net.check(*p);
    nets_.value_net.check(nets_.value);
    updates_ = nets_.policy.version();
  }

  const DsacNets& nets() const { return nets_; }
  DsacNets& mutable_nets() { return nets_; }
  const AtomSupport& support() const { return support_; }
  const DsacConfig& config() const { return cfg_; }

 private:
  DsacNets nets_;
  DsacConfig cfg_;
  AtomSupport support_;
  Rng rng_;
  AdamState adam_policy_, adam_z1_, adam_z2_, adam_value_;
  std::uint64_t updates_ = 0;
};

}  // namespace pdsac
