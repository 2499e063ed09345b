#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pdsac/replay.hpp"
#include "oracles.hpp"

using namespace pdsac;

namespace {

Transition tagged(double tag) { return pdsac::testing::tagged_transition(tag); }

void expect_exact_parents(const SumTree& t) {
  const auto& n = t.nodes();
  for (std::size_t i = 0; i + 1 < t.capacity(); ++i) ASSERT_EQ(n[i], n[2 * i + 1] + n[2 * i + 2]) << "node " << i;
}

}  // namespace

TEST(SumTree, InvariantOverRandomOperationSequences) {
  Rng rng(2024);
  for (int seq = 0; seq < 10000; ++seq) {
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
    expect_exact_parents(t);
    double sum = 0.0;
    for (std::size_t i = 0; i < cap; ++i) {
      ASSERT_EQ(t.leaf(i), leaves[i]);
      sum += leaves[i];
    }
    ASSERT_NEAR(t.total(), sum, 1e-12 * std::max(1.0, sum));
  }
}

TEST(SumTree, PrefixSearchFindsContainingInterval) {
  SumTree t(8);
  const double p[] = {1.0, 0.0, 2.0, 0.5, 0.0, 0.0, 3.0, 0.0};
  for (std::size_t i = 0; i < 8; ++i) t.set(i, p[i]);
  EXPECT_EQ(t.find_prefix(0.0), 0u);
  EXPECT_EQ(t.find_prefix(0.999), 0u);
  EXPECT_EQ(t.find_prefix(1.0), 2u);  // zero-mass leaf 1 is skipped
  EXPECT_EQ(t.find_prefix(2.999), 2u);
  EXPECT_EQ(t.find_prefix(3.0), 3u);
  EXPECT_EQ(t.find_prefix(3.5), 6u);
  EXPECT_EQ(t.find_prefix(6.49), 6u);
  EXPECT_EQ(t.find_prefix(100.0), 6u);  // beyond the total: last positive leaf
}

TEST(SumTree, RejectsBadInput) {
  EXPECT_THROW(SumTree(6), UsageError);
  SumTree t(4);
  EXPECT_THROW(t.set(4, 1.0), std::out_of_range);
  EXPECT_THROW(t.set(0, -1.0), UsageError);
  EXPECT_THROW(t.set(0, std::nan("")), UsageError);
}

TEST(Replay, NewEntriesTakeMaxPriority) {
  ReplayBuffer b({8, 0.6, 1e-6});
  EXPECT_EQ(b.max_priority(), 1.0);
  b.push(tagged(1));
  EXPECT_EQ(b.tree().leaf(0), 1.0);
  b.update_priorities({0}, {9.0});
  const double p = std::pow(9.0 + 1e-6, 0.6);
  EXPECT_DOUBLE_EQ(b.tree().leaf(0), p);
  b.push(tagged(2));
  EXPECT_DOUBLE_EQ(b.tree().leaf(1), p);
  b.update_priorities({0, 1}, {0.0, 0.0});
  b.push(tagged(3));
  EXPECT_DOUBLE_EQ(b.tree().leaf(2), p);  // running maximum never decreases
  EXPECT_DOUBLE_EQ(b.tree().leaf(0), std::pow(1e-6, 0.6));
}

TEST(Replay, RingWrapsAtCapacity) {
  ReplayBuffer b({4, 0.6, 1e-6});
  for (int i = 0; i < 6; ++i) b.push(tagged(i));
  EXPECT_EQ(b.size(), 4u);
  EXPECT_EQ(b.cursor(), 2u);
  EXPECT_EQ(b.at(0), tagged(4));
  EXPECT_EQ(b.at(1), tagged(5));
  EXPECT_EQ(b.at(2), tagged(2));
}

TEST(Replay, UpdateRejectsUnknownIndices) {
  ReplayBuffer b({8, 0.6, 1e-6});
  b.push(tagged(0));
  EXPECT_THROW(b.update_priorities({1}, {1.0}), std::out_of_range);
  EXPECT_THROW(b.update_priorities({0}, {1.0, 2.0}), UsageError);
  Rng rng(1);
  EXPECT_THROW(b.sample_prioritized(2, 0.4, rng), UsageError);
}

TEST(Replay, SamplingFrequenciesFollowPriorities) {
  const double alpha = 0.6;
  ReplayBuffer b({16, alpha, 1e-6});
  std::vector<std::size_t> idx;
  std::vector<double> td;
  for (int i = 0; i < 16; ++i) {
    idx.push_back(b.push(tagged(i)));
    td.push_back(0.1 + 0.37 * i * (i % 3 + 1));
  }
  b.update_priorities(idx, td);
  double z = 0.0;
  std::vector<double> expect(16);
  for (int i = 0; i < 16; ++i) z += expect[i] = std::pow(td[i] + 1e-6, alpha);
  for (double& e : expect) e /= z;

  Rng rng(5);
  std::vector<double> counts(16, 0.0);
  const int draws = 1000000, batch = 16;
  for (int k = 0; k < draws / batch; ++k)
    for (std::size_t i : b.sample_prioritized(batch, 0.4, rng).indices) counts[i] += 1;
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(counts[i] / draws, expect[i], 0.02) << "leaf " << i;
}

TEST(Replay, AlphaZeroIsUniformByChiSquare) {
  ReplayBuffer b({128, 0.0, 1e-6});
  std::vector<std::size_t> idx;
  std::vector<double> td;
  for (int i = 0; i < 100; ++i) {
    idx.push_back(b.push(tagged(i)));
    td.push_back(i * 0.5);
  }
  b.update_priorities(idx, td);
  Rng rng(17);
  const int draws = 100000;
  std::vector<double> counts(100, 0.0);
  for (int k = 0; k < draws; ++k) counts[b.sample_prioritized(1, 0.4, rng).indices[0]] += 1;
  const double e = draws / 100.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - e) * (c - e) / e;
  // Central 99% band; the lower edge guards against suspiciously regular counts.
  EXPECT_GT(chi2, pdsac::testing::kChi2Lower);
  EXPECT_LT(chi2, pdsac::testing::kChi2Upper);
}

TEST(Replay, ImportanceWeightsNormalisedByBatchMax) {
  ReplayBuffer b({2, 1.0, 0.0});
  b.push_with_priority(tagged(0), 1.0);
  b.push_with_priority(tagged(1), 3.0);
  Rng rng(3);
  const PrioritizedBatch pb = b.sample_prioritized(2, 1.0, rng);
  // Stratified halves of [0, 4): the first lands in leaf 0 or 1, the second in leaf 1.
  ASSERT_EQ(pb.indices[1], 1u);
  const double w0 = 1.0 / (2 * 0.25), w1 = 1.0 / (2 * 0.75);
  const double w_raw[] = {pb.indices[0] == 0 ? w0 : w1, w1};
  const double w_max = std::max(w_raw[0], w_raw[1]);
  EXPECT_DOUBLE_EQ(pb.is_weights[0], w_raw[0] / w_max);
  EXPECT_DOUBLE_EQ(pb.is_weights[1], w_raw[1] / w_max);
  for (double w : pb.is_weights) EXPECT_LE(w, 1.0);
}

TEST(Replay, BetaOneWeightsCancelSamplingBias) {
  // With beta = 1 the weighted frequency of every leaf is proportional to 1/N.
  ReplayBuffer b({8, 1.0, 0.0});
  for (int i = 0; i < 8; ++i) b.push_with_priority(tagged(i), 1.0 + i);
  Rng rng(11);
  std::vector<double> weighted(8, 0.0);
  for (int k = 0; k < 20000; ++k) {
    const PrioritizedBatch pb = b.sample_prioritized(8, 1.0, rng);
    // Undo the batch-max normalisation: w_max corresponds to the smallest sampled p.
    double pmin = 1e9;
    for (std::size_t i : pb.indices) pmin = std::min(pmin, b.tree().leaf(i));
    const double wmax = 1.0 / (8 * pmin / b.tree().total());
    for (std::size_t j = 0; j < 8; ++j) weighted[pb.indices[j]] += pb.is_weights[j] * wmax;
  }
  for (double w : weighted) EXPECT_NEAR(w / (20000.0 * 8), 1.0 / 8, 0.01);
}

TEST(Replay, UniformSamplingHasUnitWeights) {
  ReplayBuffer b({8, 0.6, 1e-6});
  for (int i = 0; i < 8; ++i) b.push(tagged(i));
  Rng rng(1);
  const PrioritizedBatch pb = b.sample_uniform(5, rng);
  ASSERT_EQ(pb.indices.size(), 5u);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(pb.is_weights[j], 1.0);
    EXPECT_EQ(pb.transitions[j], b.at(pb.indices[j]));
  }
}

TEST(Replay, SnapshotRoundTrip) {
  ReplayBuffer b({8, 0.6, 1e-6});
  for (int i = 0; i < 11; ++i) b.push(tagged(i));
  b.update_priorities({1, 4}, {2.5, 0.01});
  pdsac::testing::TempDir dir("replay");
  b.save(dir.file("r.bin"));
  const ReplayBuffer c = ReplayBuffer::load(dir.file("r.bin"));
  EXPECT_EQ(c.encode(), b.encode());
  EXPECT_EQ(c.tree().nodes(), b.tree().nodes());
  EXPECT_EQ(c.cursor(), b.cursor());
  Rng r1(4), r2(4);
  EXPECT_EQ(b.sample_prioritized(4, 0.5, r1).indices, c.sample_prioritized(4, 0.5, r2).indices);
  auto bytes = b.encode();
  bytes.pop_back();
  EXPECT_THROW(ReplayBuffer::decode(bytes), CheckpointError);
}
