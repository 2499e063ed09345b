#pragma once

// Experience replay: a ring buffer of transitions with a sum-tree over leaf
// priorities for proportional prioritized sampling.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pdsac/checkpoint.hpp"
#include "pdsac/errors.hpp"
#include "pdsac/rng.hpp"
#include "pdsac/world.hpp"

namespace pdsac {

struct Transition {
  Observation obs;
  std::array<double, kActionSize> action{};  // raw policy output in [-1, 1]
  double reward = 0.0;
  Observation next_obs;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

// Complete binary tree over `capacity` leaves (a power of two). Node 0 is the
// root; leaf i lives at node capacity - 1 + i. Parents are recomputed as the
// exact sum of their children on every write.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : capacity_(capacity), nodes_(2 * capacity - 1, 0.0) {
    if (capacity == 0 || !std::has_single_bit(capacity)) throw UsageError("SumTree capacity must be a power of two");
  }

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[0]; }
  double leaf(std::size_t i) const { return nodes_.at(capacity_ - 1 + i); }
  const std::vector<double>& nodes() const { return nodes_; }

  void set(std::size_t i, double priority) {
    if (i >= capacity_) throw std::out_of_range("SumTree leaf index");
    if (!(priority >= 0.0) || !std::isfinite(priority)) throw UsageError("priority must be finite and >= 0");
    std::size_t node = capacity_ - 1 + i;
    nodes_[node] = priority;
    while (node > 0) {
      node = (node - 1) / 2;
      nodes_[node] = nodes_[2 * node + 1] + nodes_[2 * node + 2];
    }
  }

  // Leaf whose cumulative interval [c_{i-1}, c_i) contains `value`. Values at or
  // beyond the total resolve to the last positive leaf.
  std::size_t find_prefix(double value) const {
    std::size_t node = 0;
    while (node < capacity_ - 1) {
      const std::size_t left = 2 * node + 1, right = left + 1;
      if (value < nodes_[left] || nodes_[right] <= 0.0) {
        node = left;
      } else {
        value -= nodes_[left];
        node = right;
      }
    }
    return node - (capacity_ - 1);
  }

 private:
  std::size_t capacity_;
  std::vector<double> nodes_;
};

struct ReplayConfig {
  std::size_t capacity = std::size_t{1} << 20;
  double alpha = 0.6;
  double priority_eps = 1e-6;
};

struct PrioritizedBatch {
  std::vector<Transition> transitions;
  std::vector<std::size_t> indices;
  std::vector<double> is_weights;  // (0, 1], max 1
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {}) : cfg_(cfg), tree_(std::bit_ceil(std::max<std::size_t>(cfg.capacity, 1))) {
    if (cfg.capacity == 0) throw UsageError("replay capacity must be positive");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cfg_.capacity; }
  std::size_t cursor() const { return cursor_; }
  const SumTree& tree() const { return tree_; }
  const ReplayConfig& config() const { return cfg_; }
  double max_priority() const { return max_priority_; }
  const Transition& at(std::size_t i) const { return storage_.at(i); }

  // Ring insert; new entries take the running maximum leaf priority.
  std::size_t push(const Transition& t) { return push_with_priority(t, max_priority_); }

  // Ring insert with an explicit leaf priority (already in p^alpha space).
  std::size_t push_with_priority(const Transition& t, double leaf_priority) {
    if (!(leaf_priority >= 0.0)) throw UsageError("priority must be >= 0");
    const std::size_t slot = cursor_;
    if (storage_.size() < cfg_.capacity && slot == storage_.size())
      storage_.push_back(t);
    else
      storage_[slot] = t;
    tree_.set(slot, leaf_priority);
    max_priority_ = std::max(max_priority_, leaf_priority);
    cursor_ = (cursor_ + 1) % cfg_.capacity;
    size_ = std::min(size_ + 1, cfg_.capacity);
    return slot;
  }

  double leaf_priority_for(double td_error) const {
    return std::pow(std::abs(td_error) + cfg_.priority_eps, cfg_.alpha);
  }

  void update_priorities(const std::vector<std::size_t>& indices, const std::vector<double>& td_errors) {
    if (indices.size() != td_errors.size()) throw UsageError("update_priorities: size mismatch");
    for (std::size_t i = 0; i < indices.size(); ++i)
      if (indices[i] >= size_) throw std::out_of_range("update_priorities: index out of range");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const double p = leaf_priority_for(td_errors[i]);
      tree_.set(indices[i], p);
      max_priority_ = std::max(max_priority_, p);
    }
  }

  // Stratified proportional sampling: the total mass is cut into `batch`
  // equal segments with one uniform draw in each.
  PrioritizedBatch sample_prioritized(std::size_t batch, double beta, Rng& rng) const {
    if (batch == 0 || size_ < batch) throw UsageError("sample_prioritized: not enough transitions");
    PrioritizedBatch out;
    out.transitions.reserve(batch);
    const double total = tree_.total();
    const double segment = total / static_cast<double>(batch);
    const double n = static_cast<double>(size_);
    double w_max = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const double value = (static_cast<double>(i) + rng.uniform()) * segment;
      std::size_t idx = tree_.find_prefix(value);
      if (idx >= size_) idx = size_ - 1;
      const double p = tree_.leaf(idx) / total;
      const double w = std::pow(n * p, -beta);
      w_max = std::max(w_max, w);
      out.indices.push_back(idx);
      out.is_weights.push_back(w);
      out.transitions.push_back(storage_[idx]);
    }
    for (double& w : out.is_weights) w /= w_max;
    return out;
  }

  // I.i.d. uniform with replacement; unit weights.
  PrioritizedBatch sample_uniform(std::size_t batch, Rng& rng) const {
    if (batch == 0 || size_ < batch) throw UsageError("sample_uniform: not enough transitions");
    PrioritizedBatch out;
    out.transitions.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto idx = static_cast<std::size_t>(rng.below(size_));
      out.indices.push_back(idx);
      out.is_weights.push_back(1.0);
      out.transitions.push_back(storage_[idx]);
    }
    return out;
  }

  // Snapshot: "PDSACRPL" | u32 version | config | cursor, size, max priority |
  // leaf priorities | transitions (all little-endian f64 fields).
  std::vector<char> encode() const {
    detail::ByteWriter w;
    w.raw("PDSACRPL", 8);
    w.u32(1);
    w.u64(cfg_.capacity);
    w.f64(cfg_.alpha);
    w.f64(cfg_.priority_eps);
    w.u64(cursor_);
    w.u64(size_);
    w.f64(max_priority_);
    for (std::size_t i = 0; i < size_; ++i) w.f64(tree_.leaf(i));
    for (std::size_t i = 0; i < size_; ++i) {
      const Transition& t = storage_[i];
      for (double v : t.obs.flat()) w.f64(v);
      for (double v : t.action) w.f64(v);
      w.f64(t.reward);
      for (double v : t.next_obs.flat()) w.f64(v);
      w.u32(t.done ? 1 : 0);
    }
    return w.bytes();
  }

  static ReplayBuffer decode(std::vector<char> bytes) {
    using Kind = CheckpointError::Kind;
    detail::ByteReader r(std::move(bytes));
    r.expect("PDSACRPL", 8);
    if (r.u32() != 1) throw CheckpointError(Kind::corrupt, "replay snapshot: unsupported version");
    ReplayConfig cfg;
    cfg.capacity = static_cast<std::size_t>(r.u64());
    cfg.alpha = r.f64();
    cfg.priority_eps = r.f64();
    if (cfg.capacity == 0 || cfg.capacity > (std::size_t{1} << 32))
      throw CheckpointError(Kind::corrupt, "replay snapshot: implausible capacity");
    ReplayBuffer b(cfg);
    const auto cursor = static_cast<std::size_t>(r.u64());
    const auto size = static_cast<std::size_t>(r.u64());
    if (size > cfg.capacity || cursor >= cfg.capacity)
      throw CheckpointError(Kind::corrupt, "replay snapshot: bad cursor/size");
    b.max_priority_ = r.f64();
    std::vector<double> leaves(size);
    for (double& p : leaves) p = r.f64();
    auto read_obs = [&r] {
      std::array<double, kObservationSize> f{};
      for (double& v : f) v = r.f64();
      Observation o;
      std::copy_n(f.begin(), kLidarBeams, o.ranges.begin());
      o.goal_dist = f[kLidarBeams];
      o.goal_angle = f[kLidarBeams + 1];
      o.goal_dz = f[kLidarBeams + 2];
      return o;
    };
    b.storage_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      Transition& t = b.storage_[i];
      t.obs = read_obs();
      for (double& v : t.action) v = r.f64();
      t.reward = r.f64();
      t.next_obs = read_obs();
      t.done = r.u32() != 0;
    }
    if (!r.at_end()) throw CheckpointError(Kind::corrupt, "replay snapshot: trailing bytes");
    for (std::size_t i = 0; i < size; ++i) b.tree_.set(i, leaves[i]);
    b.cursor_ = cursor;
    b.size_ = size;
    return b;
  }

  void save(const std::string& path) const { detail::write_file(path, encode()); }
  static ReplayBuffer load(const std::string& path) { return decode(detail::read_file(path)); }

 private:
  ReplayConfig cfg_;
  SumTree tree_;
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace pdsac
