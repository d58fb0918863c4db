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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embstack/embedding.hpp"
#include "embstack/optimizer.hpp"

namespace embstack {

/// Stateless id -> shard assignment: mix64(id) mod num_shards.
class ShardPlan {
 public:
  explicit ShardPlan(int64_t num_shards) : num_shards_(num_shards) {
    require(num_shards >= 1, ErrorCode::kInvalidArgument, "shard plan: num_shards must be >= 1");
  }

  int64_t num_shards() const noexcept { return num_shards_; }
  int64_t shard_of(int64_t id) const noexcept {
    return static_cast<int64_t>(mix64(static_cast<uint64_t>(id)) % static_cast<uint64_t>(num_shards_));
  }

 private:
  int64_t num_shards_;
};

struct ShardPosition {
  int64_t shard;
  int64_t index;
  bool operator==(const ShardPosition&) const = default;
};

/// Deduplicated ids split by owning shard.
struct PartitionResult {
  /// Per shard, distinct ids in first-occurrence order.
  std::vector<std::vector<int64_t>> shard_ids;
  /// Per shard, input position of each id's first occurrence.
  std::vector<std::vector<int64_t>> first_position;
  /// For each input position, where its id lives.
  std::vector<ShardPosition> inverse_index;

  int64_t num_unique() const noexcept;
  /// Rebuilds the input array from the per-shard ids.
  std::vector<int64_t> reconstruct() const;
};

/// Fused unique + partition.
PartitionResult unique_partition(std::span<const int64_t> ids, const ShardPlan& plan);

struct TableSpec {
  std::string name;
  int64_t dim;
};

/// Same-dimension member tables merged into one key space and spread over
/// per-worker shards.
class LogicalTable {
 public:
  LogicalTable(std::string name, int64_t dim, std::vector<std::string> members, int64_t num_shards,
               const TableOptions& options);
  LogicalTable(std::string name, int64_t dim, std::vector<std::string> members,
               std::vector<EmbeddingTable> shards);

  const std::string& name() const noexcept { return name_; }
  int64_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& members() const noexcept { return members_; }
  int64_t num_shards() const noexcept { return static_cast<int64_t>(shards_.size()); }
  EmbeddingTable& shard(int64_t i) { return shards_.at(static_cast<size_t>(i)); }
  const EmbeddingTable& shard(int64_t i) const { return shards_.at(static_cast<size_t>(i)); }
  std::vector<EmbeddingTable>& shards() noexcept { return shards_; }
  const std::vector<EmbeddingTable>& shards() const noexcept { return shards_; }

  bool has_member(std::string_view member) const;
  /// Storage key of `id` in member table `member`: mix64(id ^ fnv1a64(member)).
  int64_t key(std::string_view member, int64_t id) const;
  std::vector<int64_t> keys(std::string_view member, std::span<const int64_t> ids) const;

  /// Total live rows across shards.
  int64_t size() const;

 private:
  std::string name_;
  int64_t dim_;
  std::vector<std::string> members_;
  std::vector<EmbeddingTable> shards_;
};

/// Namespaces a member-table id.
int64_t namespaced_key(std::string_view member, int64_t id) noexcept;

/// One logical table per distinct dim, in order of first appearance.
/// Logical tables are named "dim<d>".
std::vector<LogicalTable> merge_tables_by_dim(const std::vector<TableSpec>& tables, int64_t num_shards,
                                              const TableOptions& options);

/// kThreaded runs one thread per simulated worker with barriers between the
/// request and response phases; kSequential iterates the workers in order.
/// Both produce identical results.
enum class ExchangeMode { kThreaded, kSequential };

/// Embedding rows for `keys` (storage keys), gathered from their owning
/// shards through a two-phase all-to-all. Unknown keys are inserted.
MatrixF all_to_all_lookup(LogicalTable& table, std::span<const int64_t> keys, const ShardPlan& plan,
                          int64_t step, ExchangeMode mode = ExchangeMode::kThreaded);

/// Sums the gradients of duplicate keys, routes them to the owning shards
/// and applies one sparse Adam step per distinct key.
void all_to_all_grad_update(LogicalTable& table, std::span<const int64_t> keys,
                            const Eigen::Ref<const MatrixF>& grads, const ShardPlan& plan,
                            const AdamConfig& cfg, int64_t step,
                            ExchangeMode mode = ExchangeMode::kThreaded);

struct LoadStats {
  std::vector<int64_t> counts;
  /// max(count) / mean(count); 1.0 when there are no ids.
  double imbalance = 1.0;
};

/// Distinct-id load per shard.
LoadStats load_stats(std::span<const int64_t> ids, const ShardPlan& plan);

}  // namespace embstack
