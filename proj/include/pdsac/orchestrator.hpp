#pragma once

// Actor/learner topology: K exploring actors and one evaluator feed a single
// learner through an experience channel and receive policy snapshots through
// a latest-value weight channel. run_serial drives the same components from
// one thread with a fixed interleaving; run_parallel gives each actor a thread.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pdsac/learner.hpp"
#include "pdsac/replay.hpp"
#include "pdsac/rng.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

// Closeable many-producer / one-consumer queue.
template <typename T>
class Channel {
 public:
  // Returns false once the channel is closed.
  bool push(T value) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return false;
      queue_.push_back(std::move(value));
    }
    cv_.notify_one();
    return true;
  }

  std::vector<T> drain() {
    std::lock_guard lock(mutex_);
    std::vector<T> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
  }

  // Waits up to `timeout` for an item or for close().
  void wait_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [this] { return closed_ || !queue_.empty(); });
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> queue_;
  bool closed_ = false;
};

// One-producer / many-consumer cell holding the most recent value.
template <typename T>
class LatestValue {
 public:
  void publish(std::shared_ptr<const T> value) {
    std::lock_guard lock(mutex_);
    value_ = std::move(value);
  }

  std::shared_ptr<const T> get() const {
    std::lock_guard lock(mutex_);
    return value_;
  }

  void close() { closed_.store(true); }
  bool closed() const { return closed_.load(); }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const T> value_;
  std::atomic<bool> closed_{false};
};

// Policy weights handed to actors. version = learner updates when taken.
struct PolicySnapshot {
  Mlp net;
  ParamSet params;
  std::uint64_t version = 0;
  LogStdBounds log_std{};
};

struct ExperienceMessage {
  int actor_id = 0;
  std::uint64_t policy_version = 0;
  std::vector<Transition> transitions;
};

struct EvalRecord {
  std::uint64_t learner_step = 0;
  double reward = 0.0;
  Outcome outcome = Outcome::running;
  int steps = 0;
};

enum class ActorRole { explore, evaluate };

struct ActorStats {
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  std::uint64_t transitions_produced = 0;
  std::uint64_t messages_sent = 0;
  std::vector<std::uint64_t> observed_versions;  // each version adopted, in order
};

// One environment instance plus a local policy copy. Exploring actors buffer
// transitions and emit a message every flush_interval steps or at episode end;
// the evaluating actor acts on the policy mean and emits one record per episode.
// Every message holds transitions collected under a single policy version.
class Actor {
 public:
  Actor(int id, ActorRole role, WorldConfig world, std::uint64_t seed, std::size_t flush_interval)
      : id_(id),
        role_(role),
        world_(std::move(world)),
        encoder_(FeatureEncoder::for_world(world_)),
        action_rng_(derive_seed(seed, 1)),
        episode_seed_base_(derive_seed(seed, 2)),
        flush_interval_(std::max<std::size_t>(flush_interval, 1)) {
    begin_episode();
  }

  int id() const { return id_; }
  ActorRole role() const { return role_; }
  const ActorStats& stats() const { return stats_; }
  std::uint64_t policy_version() const { return snapshot_ ? snapshot_->version : 0; }
  bool has_policy() const { return snapshot_ != nullptr; }

  // Ignores snapshots that are not newer than the current one.
  void adopt(std::shared_ptr<const PolicySnapshot> snap) {
    if (!snap || (snapshot_ && snap->version <= snapshot_->version)) return;
    if (!buffer_.empty()) outbox_.push_back(take_buffer());
    snapshot_ = std::move(snap);
    stats_.observed_versions.push_back(snapshot_->version);
  }

  struct StepOutput {
    std::vector<ExperienceMessage> messages;
    std::optional<EvalRecord> record;
  };

  StepOutput step() {
    if (!snapshot_) throw UsageError("actor stepped before receiving weights");
    StepOutput out;
    const ActionMode mode = role_ == ActorRole::explore ? ActionMode::explore : ActionMode::evaluate;
    const auto features = encoder_.encode(obs_);
    const auto raw =
        select_raw_action(snapshot_->net, snapshot_->params, features, mode, action_rng_, snapshot_->log_std);
    const StepResult r = pdsac::step(state_, Action::from_raw(raw), world_);
    ++stats_.env_steps;
    episode_reward_ += r.reward;
    if (role_ == ActorRole::explore) {
      const bool terminal = r.outcome == Outcome::arrived || r.outcome == Outcome::collided;
      buffer_.push_back({obs_, raw, r.reward, r.observation, terminal});
      ++stats_.transitions_produced;
    }
    state_ = r.state;
    obs_ = r.observation;
    if (r.done) {
      if (role_ == ActorRole::evaluate)
        out.record = EvalRecord{policy_version(), episode_reward_, r.outcome, state_.step_count};
      ++stats_.episodes;
      begin_episode();
    }
    if (!buffer_.empty() && (r.done || buffer_.size() >= flush_interval_)) outbox_.push_back(take_buffer());
    out.messages = std::move(outbox_);
    outbox_.clear();
    return out;
  }

  // Everything not yet emitted (end of run).
  std::vector<ExperienceMessage> flush() {
    if (!buffer_.empty()) outbox_.push_back(take_buffer());
    std::vector<ExperienceMessage> out = std::move(outbox_);
    outbox_.clear();
    return out;
  }

 private:
  void begin_episode() {
    ResetResult r = reset(world_, derive_seed(episode_seed_base_, stats_.episodes));
    state_ = std::move(r.state);
    obs_ = r.observation;
    episode_reward_ = 0.0;
  }

  ExperienceMessage take_buffer() {
    ExperienceMessage m{id_, policy_version(), std::move(buffer_)};
    buffer_.clear();
    ++stats_.messages_sent;
    return m;
  }

  int id_;
  ActorRole role_;
  WorldConfig world_;
  FeatureEncoder encoder_;
  Rng action_rng_;
  std::uint64_t episode_seed_base_;
  std::size_t flush_interval_;
  std::shared_ptr<const PolicySnapshot> snapshot_;
  WorldState state_;
  Observation obs_;
  double episode_reward_ = 0.0;
  std::vector<Transition> buffer_;
  std::vector<ExperienceMessage> outbox_;
  ActorStats stats_;
};

struct OrchestratorConfig {
  std::size_t explorers = 4;
  bool evaluator = true;
  std::size_t flush_interval = 50;
  std::uint64_t broadcast_interval = 100;
  std::size_t warmup = 5000;
  std::uint64_t update_budget = 200000;
  std::uint64_t env_step_budget = 0;  // total exploring steps; 0 = unlimited
  std::size_t batch_size = 256;
  bool prioritized = true;
  double beta_start = 0.4;
  double beta_end = 1.0;
  std::size_t eval_window = 100;
  std::uint64_t seed = 1;
  std::string variant = "pdsac-p";
};

struct MetricsRow {
  std::uint64_t learner_step = 0;
  double wall_ms = 0.0;
  std::string variant;
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  double value_loss = 0.0;
  double eval_reward_ma = std::numeric_limits<double>::quiet_NaN();
  double eval_success_ma = std::numeric_limits<double>::quiet_NaN();
};

struct RunHooks {
  std::function<void(const MetricsRow&)> on_update;
  std::function<void(const Learner&)> on_checkpoint;  // called every checkpoint_interval updates
  std::uint64_t checkpoint_interval = 0;
  std::function<void(const ExperienceMessage&)> on_message;  // observes every ingested message
  std::function<void(const EvalRecord&)> on_eval;
};

struct RunStats {
  std::uint64_t updates = 0;
  std::uint64_t env_steps = 0;                // exploring actors
  std::uint64_t evaluator_steps = 0;
  std::uint64_t transitions_produced = 0;
  std::uint64_t transitions_inserted = 0;
  std::uint64_t evaluator_replay_inserts = 0;
  std::uint64_t broadcasts = 0;
  std::vector<EvalRecord> eval_records;
  std::vector<ActorStats> actors;  // explorers first, evaluator last when present
};

// Trailing-window mean over the last `window` values.
class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window) : window_(std::max<std::size_t>(window, 1)) {}

  void add(double v) {
    values_.push_back(v);
    sum_ += v;
    if (values_.size() > window_) {
      sum_ -= values_.front();
      values_.pop_front();
    }
  }

  bool empty() const { return values_.empty(); }
  double value() const {
    return values_.empty() ? std::numeric_limits<double>::quiet_NaN() : sum_ / static_cast<double>(values_.size());
  }

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
};

inline std::vector<double> moving_average(const std::vector<double>& xs, std::size_t window) {
  MovingAverage ma(window);
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) {
    ma.add(x);
    out.push_back(ma.value());
  }
  return out;
}

// Learner side of the loop. Owns replay insertion and the warmup gate; decides
// when a fresh snapshot is due.
class LearnerLoop {
 public:
  LearnerLoop(Learner& learner, ReplayBuffer& replay, const OrchestratorConfig& cfg, FeatureEncoder encoder,
              RunHooks hooks, std::function<double()> clock)
      : learner_(learner),
        replay_(replay),
        cfg_(cfg),
        encoder_(encoder),
        hooks_(std::move(hooks)),
        clock_(std::move(clock)),
        sample_rng_(derive_seed(cfg.seed, 0x5245504cULL)),
        reward_ma_(cfg.eval_window),
        success_ma_(cfg.eval_window) {}

  void ingest(const ExperienceMessage& m) {
    if (hooks_.on_message) hooks_.on_message(m);
    for (const Transition& t : m.transitions) replay_.push(t);
    stats_.transitions_inserted += m.transitions.size();
  }

  void ingest(const EvalRecord& r) {
    reward_ma_.add(r.reward);
    success_ma_.add(r.outcome == Outcome::arrived ? 1.0 : 0.0);
    stats_.eval_records.push_back(r);
    if (hooks_.on_eval) hooks_.on_eval(r);
  }

  bool warmed_up() const { return replay_.size() >= std::max(cfg_.warmup, cfg_.batch_size); }
  bool budget_reached() const { return learner_.update_count() >= cfg_.update_budget; }

  double beta() const {
    const double frac = cfg_.update_budget == 0
                            ? 1.0
                            : std::min(1.0, static_cast<double>(learner_.update_count()) /
                                                static_cast<double>(cfg_.update_budget));
    return cfg_.beta_start + (cfg_.beta_end - cfg_.beta_start) * frac;
  }

  // One learner update; returns true when a new snapshot is due.
  bool update_once() {
    PrioritizedBatch pb = cfg_.prioritized ? replay_.sample_prioritized(cfg_.batch_size, beta(), sample_rng_)
                                           : replay_.sample_uniform(cfg_.batch_size, sample_rng_);
    const LossReport rep = learner_.update(make_batch(pb, encoder_));
    if (cfg_.prioritized) replay_.update_priorities(pb.indices, rep.td_errors);
    const std::uint64_t step = learner_.update_count();
    stats_.updates = step;
    if (hooks_.on_update) {
      MetricsRow row{step,           clock_(),          cfg_.variant,       rep.policy_loss,
                     rep.critic_loss, rep.value_loss,   reward_ma_.value(), success_ma_.value()};
      hooks_.on_update(row);
    }
    if (hooks_.on_checkpoint && hooks_.checkpoint_interval > 0 && step % hooks_.checkpoint_interval == 0)
      hooks_.on_checkpoint(learner_);
    return cfg_.broadcast_interval > 0 && step % cfg_.broadcast_interval == 0;
  }

  std::shared_ptr<const PolicySnapshot> snapshot() {
    ++stats_.broadcasts;
    return std::make_shared<const PolicySnapshot>(
        PolicySnapshot{learner_.policy_net(), learner_.policy_params(), learner_.update_count(), learner_.log_std_bounds()});
  }

  RunStats& stats() { return stats_; }

 private:
  Learner& learner_;
  ReplayBuffer& replay_;
  const OrchestratorConfig& cfg_;
  FeatureEncoder encoder_;
  RunHooks hooks_;
  std::function<double()> clock_;
  Rng sample_rng_;
  MovingAverage reward_ma_;
  MovingAverage success_ma_;
  RunStats stats_;
};

namespace detail {

inline std::vector<Actor> make_actors(const OrchestratorConfig& cfg, const WorldConfig& world) {
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < cfg.explorers; ++i)
    actors.emplace_back(static_cast<int>(i), ActorRole::explore, world, derive_seed(cfg.seed, 100 + i),
                        cfg.flush_interval);
  if (cfg.evaluator)
    actors.emplace_back(static_cast<int>(cfg.explorers), ActorRole::evaluate, world, derive_seed(cfg.seed, 300),
                        cfg.flush_interval);
  return actors;
}

inline void collect_actor_stats(RunStats& stats, const std::vector<Actor>& actors) {
  stats.actors.clear();
  stats.env_steps = stats.evaluator_steps = stats.transitions_produced = 0;
  for (const Actor& a : actors) {
    stats.actors.push_back(a.stats());
    if (a.role() == ActorRole::explore) {
      stats.env_steps += a.stats().env_steps;
      stats.transitions_produced += a.stats().transitions_produced;
    } else {
      stats.evaluator_steps += a.stats().env_steps;
    }
  }
}

}  // namespace detail

// Single-threaded deterministic schedule. Each cycle: every explorer steps
// once, the evaluator steps once, then the learner performs one update if the
// warmup gate is open. Snapshots go out every broadcast_interval updates.
// wall_ms in the metrics is simulated time (exploring steps * dt).
inline RunStats run_serial(const OrchestratorConfig& cfg, const WorldConfig& world, Learner& learner,
                           ReplayBuffer& replay, RunHooks hooks = {}) {
  std::vector<Actor> actors = detail::make_actors(cfg, world);
  std::uint64_t explore_steps = 0;
  auto clock = [&explore_steps, dt = world.dt] { return static_cast<double>(explore_steps) * dt * 1000.0; };
  LearnerLoop loop(learner, replay, cfg, FeatureEncoder::for_world(world), std::move(hooks), clock);

  auto initial = loop.snapshot();
  for (Actor& a : actors) a.adopt(initial);

  const auto env_exhausted = [&] { return cfg.env_step_budget > 0 && explore_steps >= cfg.env_step_budget; };
  while (!loop.budget_reached() && !env_exhausted()) {
    for (Actor& a : actors) {
      if (a.role() == ActorRole::explore && env_exhausted()) continue;
      Actor::StepOutput out = a.step();
      if (a.role() == ActorRole::explore) ++explore_steps;
      for (const ExperienceMessage& m : out.messages) loop.ingest(m);
      if (out.record) loop.ingest(*out.record);
    }
    if (loop.warmed_up() && !loop.budget_reached() && loop.update_once()) {
      auto snap = loop.snapshot();
      for (Actor& a : actors) a.adopt(snap);
    }
  }
  for (Actor& a : actors)
    for (const ExperienceMessage& m : a.flush()) loop.ingest(m);

  RunStats stats = std::move(loop.stats());
  stats.updates = learner.update_count();
  detail::collect_actor_stats(stats, actors);
  return stats;
}

// Threaded topology: one thread per actor, learner on the calling thread.
// Actors poll for weights without blocking and exit (after a final flush)
// once the weight channel closes or the exploring-step budget is spent.
inline RunStats run_parallel(const OrchestratorConfig& cfg, const WorldConfig& world, Learner& learner,
                             ReplayBuffer& replay, RunHooks hooks = {}) {
  std::vector<Actor> actors = detail::make_actors(cfg, world);
  const auto t0 = std::chrono::steady_clock::now();
  auto clock = [t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  LearnerLoop loop(learner, replay, cfg, FeatureEncoder::for_world(world), std::move(hooks), clock);

  Channel<ExperienceMessage> experience;
  Channel<EvalRecord> evaluations;
  LatestValue<PolicySnapshot> weights;
  std::atomic<std::uint64_t> steps_claimed{0};
  std::atomic<std::size_t> explorers_running{cfg.explorers};

  weights.publish(loop.snapshot());

  auto actor_main = [&](Actor& actor) {
    const bool explores = actor.role() == ActorRole::explore;
    while (!weights.closed()) {
      if (auto snap = weights.get(); snap && snap->version > actor.policy_version()) actor.adopt(snap);
      if (explores && cfg.env_step_budget > 0 && steps_claimed.fetch_add(1) >= cfg.env_step_budget) break;
      Actor::StepOutput out = actor.step();
      for (ExperienceMessage& m : out.messages) experience.push(std::move(m));
      if (out.record) evaluations.push(*out.record);
    }
    if (explores) {
      for (ExperienceMessage& m : actor.flush()) experience.push(std::move(m));
      explorers_running.fetch_sub(1);
    }
  };

  std::vector<std::jthread> threads;
  threads.reserve(actors.size());
  auto shutdown = [&] {
    weights.close();
    for (std::jthread& t : threads)
      if (t.joinable()) t.join();
  };

  try {
    auto snap = weights.get();
    for (Actor& a : actors) a.adopt(snap);
    for (Actor& a : actors) threads.emplace_back(actor_main, std::ref(a));

    // With a step budget the run ends once the explorers are done and their
    // data has been drained.
    while (true) {
      const bool producers_done = explorers_running.load() == 0;
      for (ExperienceMessage& m : experience.drain()) loop.ingest(m);
      for (const EvalRecord& r : evaluations.drain()) loop.ingest(r);
      if (loop.budget_reached()) break;
      if (producers_done && (cfg.env_step_budget > 0 || !loop.warmed_up())) break;
      if (loop.warmed_up()) {
        if (loop.update_once()) weights.publish(loop.snapshot());
      } else {
        experience.wait_for(std::chrono::milliseconds(5));
      }
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  for (ExperienceMessage& m : experience.drain()) loop.ingest(m);
  for (const EvalRecord& r : evaluations.drain()) loop.ingest(r);
  experience.close();
  evaluations.close();

  RunStats stats = std::move(loop.stats());
  stats.updates = learner.update_count();
  detail::collect_actor_stats(stats, actors);
  return stats;
}

}  // namespace pdsac
