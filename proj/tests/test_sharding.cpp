/*
 * Copyright 2026 The embstack Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "embstack/sharding.hpp"
#include "oracles.hpp"

namespace embstack {
namespace {

TableOptions opts(int64_t dim) {
  TableOptions o;
  o.dim = dim;
  o.block_size = 64;
  o.seed = 11;
  return o;
}

AdamConfig adam() {
  AdamConfig c;
  c.lr = 0.01;
  return c;
}

TEST(SplitMix, PublishedVector) {
  // Reference outputs of the published generator seeded with 1234567.
  oracle::SplitMix64 g{1234567};
  EXPECT_EQ(g.next(), 6457827717110365317ULL);
  EXPECT_EQ(g.next(), 3203168211198807973ULL);
  EXPECT_EQ(g.next(), 9817491932198370423ULL);
  uint64_t state = 1234567;
  for (int i = 0; i < 3; ++i) state += 0x9e3779b97f4a7c15ULL;
  EXPECT_EQ(mix64(state), oracle::SplitMix64{state - 0x9e3779b97f4a7c15ULL}.next());
}

TEST(Merge, GroupsByDim) {
  const auto lts = merge_tables_by_dim({{"a", 16}, {"b", 16}, {"c", 32}}, 2, opts(16));
  ASSERT_EQ(lts.size(), 2u);
  EXPECT_EQ(lts[0].name(), "dim16");
  EXPECT_EQ(lts[0].members(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(lts[0].dim(), 16);
  EXPECT_EQ(lts[1].members(), (std::vector<std::string>{"c"}));
  EXPECT_EQ(lts[1].dim(), 32);
  EXPECT_EQ(lts[1].num_shards(), 2);
  EXPECT_EQ(lts[1].shard(0).dim(), 32);
}

TEST(Merge, DistinctDimsAndErrors) {
  EXPECT_EQ(merge_tables_by_dim({{"a", 1}, {"b", 2}, {"c", 3}}, 1, opts(1)).size(), 3u);
  EXPECT_THROW(merge_tables_by_dim({{"a", 1}, {"a", 2}}, 1, opts(1)), Error);
}

TEST(Merge, NamespacesMemberIds) {
  auto lts = merge_tables_by_dim({{"a", 4}, {"b", 4}}, 1, opts(4));
  auto& lt = lts[0];
  EXPECT_EQ(lt.key("a", 5), oracle::namespaced("a", 5));
  EXPECT_EQ(lt.key("b", 5), oracle::namespaced("b", 5));
  EXPECT_NE(lt.key("a", 5), lt.key("b", 5));
  EXPECT_THROW(lt.key("zzz", 5), Error);
  const std::vector<int64_t> keys = {lt.key("a", 5), lt.key("b", 5)};
  const ShardPlan plan(1);
  const MatrixF rows = all_to_all_lookup(lt, keys, plan, 1);
  EXPECT_NE(rows.row(0), rows.row(1));
  EXPECT_EQ(lt.keys("a", std::vector<int64_t>{5, 6}),
            (std::vector<int64_t>{oracle::namespaced("a", 5), oracle::namespaced("a", 6)}));
}

TEST(Partition, SingleShard) {
  const std::vector<int64_t> ids = {8, 3, 8, 16};
  const auto r = unique_partition(ids, ShardPlan(1));
  ASSERT_EQ(r.shard_ids.size(), 1u);
  EXPECT_EQ(r.shard_ids[0], (std::vector<int64_t>{8, 3, 16}));
  EXPECT_EQ(r.first_position[0], (std::vector<int64_t>{0, 1, 3}));
  EXPECT_EQ(r.reconstruct(), ids);
  EXPECT_EQ(r.num_unique(), 3);
}

TEST(Partition, Empty) {
  const auto r = unique_partition({}, ShardPlan(4));
  ASSERT_EQ(r.shard_ids.size(), 4u);
  for (const auto& s : r.shard_ids) EXPECT_TRUE(s.empty());
  EXPECT_TRUE(r.inverse_index.empty());
  EXPECT_TRUE(r.reconstruct().empty());
}

TEST(Partition, TwoShardsMatchOracle) {
  const std::vector<int64_t> ids = {8, 3, 8, 16};
  const ShardPlan plan(2);
  const auto r = unique_partition(ids, plan);
  std::vector<std::vector<int64_t>> expect(2);
  std::set<int64_t> seen;
  for (int64_t id : ids) {
    EXPECT_EQ(plan.shard_of(id), oracle::shard_of(id, 2));
    if (seen.insert(id).second) expect[oracle::shard_of(id, 2)].push_back(id);
  }
  EXPECT_EQ(r.shard_ids, expect);
  EXPECT_EQ(r.reconstruct(), ids);
  for (size_t i = 0; i < ids.size(); ++i) {
    const auto& pos = r.inverse_index[i];
    EXPECT_EQ(r.shard_ids[pos.shard][pos.index], ids[i]);
  }
}

TEST(PartitionProperty, RoundTripUniquenessCoverage) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const int64_t shards = 1 + static_cast<int64_t>(rng() % 9);
    const auto n = static_cast<size_t>(rng() % 300);
    const uint64_t range = trial % 5 == 0 ? 1 : 1 + rng() % 1000;  // all-duplicates every fifth trial
    std::vector<int64_t> ids(n);
    for (auto& id : ids) id = static_cast<int64_t>(rng() % range) - 500;
    const ShardPlan plan(shards);
    const auto r = unique_partition(ids, plan);
    ASSERT_EQ(r.reconstruct(), ids);
    std::set<int64_t> all;
    for (int64_t s = 0; s < shards; ++s) {
      for (size_t k = 0; k < r.shard_ids[s].size(); ++k) {
        const int64_t id = r.shard_ids[s][k];
        ASSERT_EQ(plan.shard_of(id), s);
        ASSERT_TRUE(all.insert(id).second);
        ASSERT_EQ(ids[r.first_position[s][k]], id);
      }
    }
    ASSERT_EQ(all, std::set<int64_t>(ids.begin(), ids.end()));
    ASSERT_EQ(r.num_unique(), static_cast<int64_t>(all.size()));
  }
}

TEST(Lookup, SingleShardEqualsDirect) {
  auto lt = merge_tables_by_dim({{"t", 8}}, 1, opts(8))[0];
  EmbeddingTable direct("t", opts(8));
  const std::vector<int64_t> keys = {5, 9, 5, -2};
  const MatrixF rows = all_to_all_lookup(lt, keys, ShardPlan(1), 1);
  const std::vector<int64_t> uniq = {5, 9, -2};
  const auto slots = lookup_or_insert(direct, uniq, 1);
  const MatrixF g = gather(direct, std::vector<int64_t>{slots[0], slots[1], slots[0], slots[2]});
  EXPECT_EQ(rows, g);
  EXPECT_EQ(rows.row(0), rows.row(2));
}

TEST(Lookup, ShardCountMismatch) {
  auto lt = merge_tables_by_dim({{"t", 2}}, 2, opts(2))[0];
  const std::vector<int64_t> keys = {1};
  EXPECT_THROW(all_to_all_lookup(lt, keys, ShardPlan(3), 1), Error);
  EXPECT_THROW(all_to_all_grad_update(lt, keys, MatrixF::Zero(1, 2), ShardPlan(3), adam(), 1), Error);
}

TEST(GradUpdate, DuplicatesPreSummed) {
  auto lt = merge_tables_by_dim({{"t", 2}}, 2, opts(2))[0];
  auto ref = merge_tables_by_dim({{"t", 2}}, 2, opts(2))[0];
  const ShardPlan plan(2);
  const std::vector<int64_t> dup = {7, 7}, one = {7};
  all_to_all_lookup(lt, dup, plan, 1);
  all_to_all_lookup(ref, one, plan, 1);
  MatrixF g(2, 2);
  g << 0.25f, -1.0f, 0.5f, 2.0f;
  MatrixF sum(1, 2);
  sum << 0.75f, 1.0f;
  all_to_all_grad_update(lt, dup, g, plan, adam(), 1);
  all_to_all_grad_update(ref, one, sum, plan, adam(), 1);
  EXPECT_EQ(all_to_all_lookup(lt, one, plan, 2), all_to_all_lookup(ref, one, plan, 2));
  EXPECT_THROW(all_to_all_grad_update(lt, dup, MatrixF::Zero(1, 2), plan, adam(), 2), Error);
}

TEST(GradUpdate, ZeroGradientKeepsParams) {
  auto lt = merge_tables_by_dim({{"t", 3}}, 4, opts(3))[0];
  const ShardPlan plan(4);
  const std::vector<int64_t> keys = {1, 2, 3};
  const MatrixF before = all_to_all_lookup(lt, keys, plan, 1);
  all_to_all_grad_update(lt, keys, MatrixF::Zero(3, 3), plan, adam(), 1);
  EXPECT_EQ(all_to_all_lookup(lt, keys, plan, 2), before);
}

// Keystone: lookups and updates over S shards reproduce S = 1.
TEST(ShardingProperty, DistributionInvariance) {
  const int64_t dim = 8;
  std::vector<LogicalTable> tables;
  for (int64_t s : {1, 2, 4, 8}) tables.push_back(merge_tables_by_dim({{"t", dim}}, s, opts(dim))[0]);
  std::mt19937_64 rng(31);
  std::normal_distribution<float> n;
  for (int64_t step = 1; step <= 50; ++step) {
    std::vector<int64_t> keys(64 + rng() % 64);
    for (auto& k : keys) k = static_cast<int64_t>(rng() % 500) * 7919;
    MatrixF g(static_cast<Eigen::Index>(keys.size()), dim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    std::vector<MatrixF> rows;
    for (size_t t = 0; t < tables.size(); ++t) {
      const ShardPlan plan(tables[t].num_shards());
      const auto mode = t % 2 ? ExchangeMode::kThreaded : ExchangeMode::kSequential;
      rows.push_back(all_to_all_lookup(tables[t], keys, plan, step, mode));
      all_to_all_grad_update(tables[t], keys, g, plan, adam(), step, mode);
    }
    for (size_t t = 1; t < rows.size(); ++t) ASSERT_LE((rows[t] - rows[0]).cwiseAbs().maxCoeff(), 1e-6f);
    if (step == 1) {
      for (size_t t = 1; t < rows.size(); ++t) ASSERT_EQ(rows[t], rows[0]);
    }
  }
  for (size_t t = 1; t < tables.size(); ++t) EXPECT_EQ(tables[t].size(), tables[0].size());
}

TEST(LoadStats, Examples) {
  const std::vector<int64_t> ids = {1, 2, 3, 4, 5};
  const auto one = load_stats(ids, ShardPlan(1));
  EXPECT_EQ(one.counts, (std::vector<int64_t>{5}));
  EXPECT_DOUBLE_EQ(one.imbalance, 1.0);
  const std::vector<int64_t> same(100, 42);
  const auto degenerate = load_stats(same, ShardPlan(8));
  EXPECT_EQ(std::accumulate(degenerate.counts.begin(), degenerate.counts.end(), int64_t{0}), 1);
  EXPECT_DOUBLE_EQ(degenerate.imbalance, 8.0);
  EXPECT_DOUBLE_EQ(load_stats({}, ShardPlan(4)).imbalance, 1.0);
}

TEST(LoadStats, UniformIdsBalance) {
  std::mt19937_64 rng(2024);
  std::vector<int64_t> ids(1000000);
  for (auto& id : ids) id = static_cast<int64_t>(rng());
  const auto stats = load_stats(ids, ShardPlan(8));
  EXPECT_EQ(std::accumulate(stats.counts.begin(), stats.counts.end(), int64_t{0}), 1000000);
  EXPECT_GE(stats.imbalance, 1.0);
  EXPECT_LE(stats.imbalance, 1.01);
}

TEST(LoadStats, SequentialIdsBalance) {
  std::vector<int64_t> ids(1000000);
  std::iota(ids.begin(), ids.end(), 0);
  EXPECT_LE(load_stats(ids, ShardPlan(8)).imbalance, 1.01);
}

}  // namespace
}  // namespace embstack
