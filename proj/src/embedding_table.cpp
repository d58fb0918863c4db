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

#include <algorithm>
#include <unordered_set>

#include "embstack/embedding.hpp"

namespace embstack {

double initial_value(uint64_t seed, int64_t key, int64_t column, int64_t dim) noexcept {
  uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ static_cast<uint64_t>(key));
  h = mix64(h ^ (static_cast<uint64_t>(column) * 0xd1b54a32d192ed03ULL));
  const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
  return (2.0 * unit - 1.0) / std::sqrt(static_cast<double>(dim));
}

int64_t IdMap::insert(int64_t id) {
  int64_t slot;
  if (!free_list_.empty()) {
    slot = free_list_.back();
    free_list_.pop_back();
  } else {
    slot = high_water_++;
    slot_ids_.push_back(0);
    live_.push_back(0);
  }
  auto [it, inserted] = slots_.emplace(id, slot);
  require(inserted, ErrorCode::kInvalidArgument, "idmap: id " + std::to_string(id) + " already mapped");
  slot_ids_[slot] = id;
  live_[slot] = 1;
  return slot;
}

int64_t IdMap::erase(int64_t id) {
  auto it = slots_.find(id);
  require(it != slots_.end(), ErrorCode::kInvalidArgument, "idmap: id " + std::to_string(id) + " not mapped");
  const int64_t slot = it->second;
  slots_.erase(it);
  live_[slot] = 0;
  free_list_.push_back(slot);
  return slot;
}

EmbeddingTable::EmbeddingTable(std::string name, TableOptions options)
    : name_(std::move(name)), options_(options), store_(options.dim, options.block_size) {
  require(options.evict_threshold >= 0, ErrorCode::kInvalidArgument,
          "table " + name_ + ": eviction threshold must be >= 0");
}

std::vector<int64_t> EmbeddingTable::sorted_ids() const {
  std::vector<int64_t> ids;
  ids.reserve(id_map_.size());
  for (int64_t s = 0; s < id_map_.high_water(); ++s) {
    if (id_map_.is_live(s)) ids.push_back(id_map_.id_at(s));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void EmbeddingTable::check_live(int64_t slot) const {
  require(id_map_.is_live(slot), ErrorCode::kOutOfRange,
          "table " + name_ + ": slot " + std::to_string(slot) + " is not a live row");
}

std::vector<int64_t> lookup_or_insert(EmbeddingTable& table, std::span<const int64_t> unique_ids,
                                      int64_t step) {
  record_invocation(Module::kEmbedding);
  {
    std::unordered_set<int64_t> seen;
    seen.reserve(unique_ids.size());
    for (int64_t id : unique_ids) {
      require(seen.insert(id).second, ErrorCode::kInvalidArgument,
              "lookup_or_insert: duplicate id " + std::to_string(id));
    }
  }
  auto& map = table.id_map();
  auto& store = table.store();
  const int64_t dim = table.dim();
  const uint64_t seed = table.options().seed;
  std::vector<int64_t> offsets(unique_ids.size());
  for (size_t i = 0; i < unique_ids.size(); ++i) {
    const int64_t id = unique_ids[i];
    if (auto slot = map.find(id)) {
      offsets[i] = *slot;
    } else {
      const int64_t s = map.insert(id);
      store.reserve_slots(s + 1);
      auto p = store.param(s);
      for (int64_t c = 0; c < dim; ++c) p(c) = static_cast<float>(initial_value(seed, id, c, dim));
      store.m(s).setZero();
      store.v(s).setZero();
      offsets[i] = s;
    }
    store.last_step(offsets[i]) = step;
  }
  return offsets;
}

MatrixF gather(const EmbeddingTable& table, std::span<const int64_t> offsets) {
  record_invocation(Module::kEmbedding);
  MatrixF out(static_cast<Eigen::Index>(offsets.size()), table.dim());
  for (size_t i = 0; i < offsets.size(); ++i) {
    table.check_live(offsets[i]);
    out.row(static_cast<Eigen::Index>(i)) = table.store().param(offsets[i]);
  }
  return out;
}

void scatter_update(EmbeddingTable& table, std::span<const int64_t> offsets,
                    const Eigen::Ref<const MatrixF>& rows) {
  require(rows.rows() == static_cast<Eigen::Index>(offsets.size()) && rows.cols() == table.dim(),
          ErrorCode::kInvalidArgument, "scatter_update: rows shape does not match offsets x dim");
  record_invocation(Module::kEmbedding);
  std::unordered_set<int64_t> seen;
  seen.reserve(offsets.size());
  for (int64_t s : offsets) {
    table.check_live(s);
    require(seen.insert(s).second, ErrorCode::kInvalidArgument,
            "scatter_update: duplicate offset " + std::to_string(s));
  }
  for (size_t i = 0; i < offsets.size(); ++i) {
    table.store().param(offsets[i]) = rows.row(static_cast<Eigen::Index>(i));
  }
}

int64_t evict(EmbeddingTable& table, int64_t current_step) {
  record_invocation(Module::kEmbedding);
  const int64_t threshold = table.options().evict_threshold;
  if (threshold == kNeverEvict) return 0;
  auto& map = table.id_map();
  auto& store = table.store();
  int64_t evicted = 0;
  for (int64_t s = 0; s < map.high_water(); ++s) {
    if (!map.is_live(s)) continue;
    if (current_step - store.last_step(s) <= threshold) continue;
    map.erase(map.id_at(s));
    store.m(s).setZero();
    store.v(s).setZero();
    store.last_step(s) = 0;
    ++evicted;
  }
  return evicted;
}

void restore_row(EmbeddingTable& table, int64_t id, std::span<const float> weight,
                 std::span<const float> m, std::span<const float> v, int64_t last_step) {
  const auto dim = static_cast<size_t>(table.dim());
  require(weight.size() == dim && m.size() == dim && v.size() == dim, ErrorCode::kInvalidArgument,
          "restore_row: row width does not match table dim");
  const int64_t s = table.id_map().insert(id);
  auto& store = table.store();
  store.reserve_slots(s + 1);
  for (size_t c = 0; c < dim; ++c) {
    store.param(s)(c) = weight[c];
    store.m(s)(c) = m[c];
    store.v(s)(c) = v[c];
  }
  store.last_step(s) = last_step;
}

}  // namespace embstack
