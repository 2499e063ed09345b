#pragma once

// Soft actor-critic with a separate state-value network V and its polyak target.
//   critic target  r + gamma * V_target(s')
//   value target   min_k Q_k(s, a') - alpha * log pi(a'|s)
//   policy loss    alpha * log pi(a'|s) - min_k Q_k(s, a'), a' reparameterised

#include <cstdint>
#include <vector>

#include "pdsac/approximator.hpp"
#include "pdsac/learner.hpp"

namespace pdsac {

struct SacNets {
  Mlp policy_net;
  Mlp critic_net;
  Mlp value_net;
  ParamSet policy;
  ParamSet q1;
  ParamSet q2;
  ParamSet value;
  ParamSet value_target;

  static SacNets create(std::size_t obs_dim, std::size_t hidden, Rng& rng, double policy_output_scale = 1e-3) {
    SacNets n;
    n.policy_net = Mlp({obs_dim, hidden, hidden, hidden, 2 * kActionSize});
    n.critic_net = Mlp({obs_dim + kActionSize, hidden, hidden, hidden, 1});
    n.value_net = Mlp({obs_dim, hidden, hidden, hidden, 1});
    n.policy = n.policy_net.init(rng, policy_output_scale);
    n.q1 = n.critic_net.init(rng);
    n.q2 = n.critic_net.init(rng);
    n.value = n.value_net.init(rng);
    n.value_target = n.value;
    n.value_target.set_version(0);
    return n;
  }
};

// r + gamma * (1 - done) * V_target(s'). Pure: touches no parameters.
inline Vector sac_q_target(const SacNets& nets, const Batch& b, const SoftActorCriticConfig& cfg) {
  const Vector v_next = nets.value_net.forward(nets.value_target, b.next_obs).row(0).transpose();
  return b.rewards + cfg.gamma * (Vector::Ones(b.size()) - b.dones).cwiseProduct(v_next);
}

// min(Q1, Q2)(s, a') - alpha * log pi(a'|s) for one reparameterised a' per state.
inline Vector sac_value_target(const SacNets& nets, const Batch& b, const Matrix& noise,
                               const SoftActorCriticConfig& cfg) {
  const Matrix raw = nets.policy_net.forward(nets.policy, b.obs);
  const SquashedSample a = squash_sample(split_policy_head(raw, cfg.log_std), noise);
  const Matrix sa = concat_rows(b.obs, a.action);
  const Vector q1 = nets.critic_net.forward(nets.q1, sa).row(0).transpose();
  const Vector q2 = nets.critic_net.forward(nets.q2, sa).row(0).transpose();
  return q1.cwiseMin(q2) - cfg.temperature * a.log_prob;
}

struct SacGradients {
  ParamSet policy;
  ParamSet q1;
  ParamSet q2;
  ParamSet value;
  LossReport report;
};

// All four losses and their parameter gradients, evaluated at the current
// parameters with externally supplied policy noise (3 x B).
inline SacGradients sac_losses(const SacNets& nets, const Batch& b, const Matrix& noise,
                               const SoftActorCriticConfig& cfg) {
  const Eigen::Index n = b.size();
  const double inv_b = 1.0 / static_cast<double>(n);
  SacGradients g{nets.policy.zeros_like(), nets.q1.zeros_like(), nets.q2.zeros_like(), nets.value.zeros_like(), {}};

  // Critics.
  const Vector y = sac_q_target(nets, b, cfg);
  const Matrix sa = concat_rows(b.obs, b.actions);
  Tape t1, t2;
  const Vector q1 = nets.critic_net.forward(nets.q1, sa, t1).row(0).transpose();
  const Vector q2 = nets.critic_net.forward(nets.q2, sa, t2).row(0).transpose();
  const Vector e1 = q1 - y, e2 = q2 - y;
  g.report.q1_loss = 0.5 * weighted_mean(b.weights, e1.cwiseProduct(e1));
  g.report.q2_loss = 0.5 * weighted_mean(b.weights, e2.cwiseProduct(e2));
  g.report.critic_loss = 0.5 * (g.report.q1_loss + g.report.q2_loss);
  nets.critic_net.backward(nets.q1, t1, (b.weights.cwiseProduct(e1) * inv_b).transpose(), &g.q1);
  nets.critic_net.backward(nets.q2, t2, (b.weights.cwiseProduct(e2) * inv_b).transpose(), &g.q2);
  const Vector td = y - q1.cwiseMin(q2);
  g.report.td_errors.assign(td.data(), td.data() + n);

  // Fresh policy action a' at s.
  Tape tp;
  const Matrix raw = nets.policy_net.forward(nets.policy, b.obs, tp);
  const SquashedSample a = squash_sample(split_policy_head(raw, cfg.log_std), noise);
  const Matrix sa_new = concat_rows(b.obs, a.action);
  Tape tn1, tn2;
  const Vector qn1 = nets.critic_net.forward(nets.q1, sa_new, tn1).row(0).transpose();
  const Vector qn2 = nets.critic_net.forward(nets.q2, sa_new, tn2).row(0).transpose();
  const Vector q_min = qn1.cwiseMin(qn2);

  // State value.
  const Vector v_target = q_min - cfg.temperature * a.log_prob;
  Tape tv;
  const Vector v = nets.value_net.forward(nets.value, b.obs, tv).row(0).transpose();
  const Vector ev = v - v_target;
  g.report.value_loss = 0.5 * weighted_mean(b.weights, ev.cwiseProduct(ev));
  nets.value_net.backward(nets.value, tv, (b.weights.cwiseProduct(ev) * inv_b).transpose(), &g.value);

  // Policy: gradient reaches a' through whichever critic attains the minimum.
  g.report.policy_loss = weighted_mean(b.weights, cfg.temperature * a.log_prob - q_min);
  Matrix d1 = Matrix::Zero(1, n), d2 = Matrix::Zero(1, n);
  for (Eigen::Index j = 0; j < n; ++j) (qn1(j) <= qn2(j) ? d1 : d2)(0, j) = -b.weights(j) * inv_b;
  const Matrix din = nets.critic_net.backward(nets.q1, tn1, d1, nullptr) + nets.critic_net.backward(nets.q2, tn2, d2, nullptr);
  const Matrix d_action = din.bottomRows(kActionSize);
  const Vector d_log_prob = cfg.temperature * b.weights * inv_b;
  const Matrix d_raw = squash_backward(raw, noise, a, d_action, d_log_prob, cfg.log_std);
  nets.policy_net.backward(nets.policy, tp, d_raw, &g.policy);
  return g;
}

class SacLearner final : public Learner {
 public:
  SacLearner(SacNets nets, SoftActorCriticConfig cfg, std::uint64_t seed)
      : nets_(std::move(nets)),
        cfg_(cfg),
        rng_(seed),
        adam_policy_(AdamState::for_params(nets_.policy)),
        adam_q1_(AdamState::for_params(nets_.q1)),
        adam_q2_(AdamState::for_params(nets_.q2)),
        adam_value_(AdamState::for_params(nets_.value)) {}

  // One gradient step on every network, then the polyak target update.
  LossReport update(const Batch& b) override {
    const Matrix noise = standard_normal(rng_, kActionSize, b.size());
    SacGradients g = sac_losses(nets_, b, noise, cfg_);
    if (!all_finite(g.report) || !g.policy.all_finite() || !g.q1.all_finite() || !g.q2.all_finite() ||
        !g.value.all_finite())
      throw TrainingFault("non-finite SAC loss at update " + std::to_string(updates_));
    adam_step(nets_.q1, g.q1, adam_q1_, cfg_.adam);
    adam_step(nets_.q2, g.q2, adam_q2_, cfg_.adam);
    adam_step(nets_.value, g.value, adam_value_, cfg_.adam);
    adam_step(nets_.policy, g.policy, adam_policy_, cfg_.adam);
    soft_update(nets_.value_target, nets_.value, cfg_.tau);
    nets_.value_target.advance_version();
    ++updates_;
    return std::move(g.report);
  }

  const Mlp& policy_net() const override { return nets_.policy_net; }
  const ParamSet& policy_params() const override { return nets_.policy; }
  std::uint64_t update_count() const override { return updates_; }
  LogStdBounds log_std_bounds() const override { return cfg_.log_std; }

  std::vector<NamedParams> parameters() const override {
    return {{"policy", nets_.policy}, {"q1", nets_.q1}, {"q2", nets_.q2},
            {"value", nets_.value},   {"value_target", nets_.value_target}};
  }

  void restore(const std::vector<NamedParams>& sets) override {
    nets_.policy = find_params(sets, "policy");
    nets_.q1 = find_params(sets, "q1");
    nets_.q2 = find_params(sets, "q2");
    nets_.value = find_params(sets, "value");
    nets_.value_target = find_params(sets, "value_target");
    nets_.policy_net.check(nets_.policy);
    nets_.critic_net.check(nets_.q1);
    nets_.critic_net.check(nets_.q2);
    nets_.value_net.check(nets_.value);
    nets_.value_net.check(nets_.value_target);
    updates_ = nets_.policy.version();
  }

  const SacNets& nets() const { return nets_; }
  SacNets& mutable_nets() { return nets_; }
  const SoftActorCriticConfig& config() const { return cfg_; }

 private:
  SacNets nets_;
  SoftActorCriticConfig cfg_;
  Rng rng_;
  AdamState adam_policy_, adam_q1_, adam_q2_, adam_value_;
  std::uint64_t updates_ = 0;
};

}  // namespace pdsac
