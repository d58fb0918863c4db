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

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "embstack/common.hpp"

namespace embstack {

/// Deterministic initial value for column `column` of the row keyed by
/// `key`, uniform in [-1/sqrt(dim), 1/sqrt(dim)]. Depends only on its
/// arguments, never on slot placement.
double initial_value(uint64_t seed, int64_t key, int64_t column, int64_t dim) noexcept;

/// First storage tier: feature id -> slot offset. Freed slots are reused
/// LIFO before the high-water mark grows.
class IdMap {
 public:
  std::optional<int64_t> find(int64_t id) const {
    auto it = slots_.find(id);
    if (it == slots_.end()) return std::nullopt;
    return it->second;
  }

  /// Assigns a slot to an id that is not yet mapped.
  int64_t insert(int64_t id);
  /// Removes a live id and returns its slot to the free list.
  int64_t erase(int64_t id);

  bool is_live(int64_t slot) const noexcept {
    return slot >= 0 && slot < high_water_ && live_[slot] != 0;
  }
  int64_t id_at(int64_t slot) const { return slot_ids_[slot]; }
  int64_t size() const noexcept { return static_cast<int64_t>(slots_.size()); }
  int64_t high_water() const noexcept { return high_water_; }
  const std::vector<int64_t>& free_list() const noexcept { return free_list_; }

 private:
  std::unordered_map<int64_t, int64_t> slots_;
  std::vector<int64_t> slot_ids_;
  std::vector<uint8_t> live_;
  std::vector<int64_t> free_list_;
  int64_t high_water_ = 0;
};

/// Second storage tier: fixed-size blocks of parameter rows, with Adam
/// moments and last-touched step stored per row at the same slot.
/// Slot s lives in block s / block_size, row s % block_size.
template <typename Scalar>
class BasicBlockStore {
 public:
  using Matrix = RowMatrix<Scalar>;

  BasicBlockStore(int64_t dim, int64_t block_size) : dim_(dim), block_size_(block_size) {
    require(dim >= 1, ErrorCode::kInvalidArgument, "block store: dim must be >= 1");
    require(block_size >= 1, ErrorCode::kInvalidArgument, "block store: block_size must be >= 1");
  }

  int64_t dim() const noexcept { return dim_; }
  int64_t block_size() const noexcept { return block_size_; }
  int64_t num_blocks() const noexcept { return static_cast<int64_t>(blocks_.size()); }
  int64_t capacity() const noexcept { return num_blocks() * block_size_; }

  void reserve_slots(int64_t slots) {
    while (capacity() < slots) {
      Block b;
      b.param = Matrix::Zero(block_size_, dim_);
      b.m = Matrix::Zero(block_size_, dim_);
      b.v = Matrix::Zero(block_size_, dim_);
      b.last_step.assign(block_size_, 0);
      blocks_.push_back(std::move(b));
    }
  }

  auto param(int64_t slot) { return block(slot).param.row(slot % block_size_); }
  auto param(int64_t slot) const { return block(slot).param.row(slot % block_size_); }
  auto m(int64_t slot) { return block(slot).m.row(slot % block_size_); }
  auto m(int64_t slot) const { return block(slot).m.row(slot % block_size_); }
  auto v(int64_t slot) { return block(slot).v.row(slot % block_size_); }
  auto v(int64_t slot) const { return block(slot).v.row(slot % block_size_); }
  int64_t& last_step(int64_t slot) { return block(slot).last_step[slot % block_size_]; }
  int64_t last_step(int64_t slot) const { return block(slot).last_step[slot % block_size_]; }

 private:
  struct Block {
    Matrix param, m, v;
    std::vector<int64_t> last_step;
  };

  Block& block(int64_t slot) { return blocks_[slot / block_size_]; }
  const Block& block(int64_t slot) const { return blocks_[slot / block_size_]; }

  int64_t dim_;
  int64_t block_size_;
  std::vector<Block> blocks_;
};

using BlockStore = BasicBlockStore<float>;

constexpr int64_t kNeverEvict = std::numeric_limits<int64_t>::max();

struct TableOptions {
  int64_t dim = 16;
  int64_t block_size = 1024;
  uint64_t seed = 0;
  /// Rows untouched for more than this many steps are evicted.
  int64_t evict_threshold = kNeverEvict;
};

/// Conflict-free dynamic embedding table: every live feature id owns a
/// distinct row.
///
/// Single writer, many readers: gather may run concurrently, while
/// lookup_or_insert, scatter_update, evict and optimizer steps need
/// exclusive access.
class EmbeddingTable {
 public:
  EmbeddingTable(std::string name, TableOptions options);

  const std::string& name() const noexcept { return name_; }
  const TableOptions& options() const noexcept { return options_; }
  int64_t dim() const noexcept { return options_.dim; }
  int64_t size() const noexcept { return id_map_.size(); }

  const IdMap& id_map() const noexcept { return id_map_; }
  IdMap& id_map() noexcept { return id_map_; }
  const BlockStore& store() const noexcept { return store_; }
  BlockStore& store() noexcept { return store_; }

  /// Live ids in ascending order.
  std::vector<int64_t> sorted_ids() const;

  /// Throws unless `slot` is a live row.
  void check_live(int64_t slot) const;

 private:
  std::string name_;
  TableOptions options_;
  IdMap id_map_;
  BlockStore store_;
};

/// Returns the slot of every id, inserting unknown ids with their
/// deterministic initial row. Every returned slot is stamped with `step`.
/// Ids must be distinct.
std::vector<int64_t> lookup_or_insert(EmbeddingTable& table, std::span<const int64_t> unique_ids,
                                      int64_t step);

/// Rows at `offsets`, in order; duplicates allowed.
MatrixF gather(const EmbeddingTable& table, std::span<const int64_t> offsets);

/// Overwrites the rows at distinct live `offsets`.
void scatter_update(EmbeddingTable& table, std::span<const int64_t> offsets,
                    const Eigen::Ref<const MatrixF>& rows);

/// Frees every row with current_step - last_step > threshold.
int64_t evict(EmbeddingTable& table, int64_t current_step);

/// Houses a full record at a fresh slot (checkpoint restore).
void restore_row(EmbeddingTable& table, int64_t id, std::span<const float> weight,
                 std::span<const float> m, std::span<const float> v, int64_t last_step);

}  // namespace embstack
