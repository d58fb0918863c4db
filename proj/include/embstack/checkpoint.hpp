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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "embstack/embedding.hpp"
#include "embstack/sharding.hpp"

namespace embstack {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// A table to persist: its in-memory shards plus bookkeeping.
struct TableSnapshot {
  std::string name;
  int64_t dim = 0;
  std::vector<const EmbeddingTable*> shards;
  int64_t global_step = 0;
  std::vector<std::string> members;

  static TableSnapshot of(const LogicalTable& table, int64_t global_step);
  static TableSnapshot of(const EmbeddingTable& table, int64_t global_step);
};

struct ManifestTable {
  std::string name;
  int64_t dim = 0;
  std::vector<int64_t> rows_per_file;
  int64_t global_step = 0;
  // Table options, so restored tables initialize new ids identically.
  uint64_t seed = 0;
  int64_t block_size = 1024;
  std::optional<int64_t> evict_threshold;
  std::vector<std::string> members;
};

struct CheckpointManifest {
  int version = kCheckpointVersion;
  std::vector<std::string> files;
  std::vector<ManifestTable> tables;

  std::string to_json() const;
  static CheckpointManifest from_json(const std::string& text, const std::string& source);
};

/// Writes `num_files` SafeTensors shard files in parallel, then the
/// manifest. A record with storage key k goes to file mix64(k) % num_files;
/// rows within a file are sorted by key. Per table the tensors are
/// "<name>.ids", "<name>.weight", "<name>.m", "<name>.v", "<name>.last_step".
CheckpointManifest save_sharded(const std::vector<TableSnapshot>& tables, const std::filesystem::path& dir,
                                int64_t num_files);

struct LoadedTable {
  std::string name;
  int64_t dim = 0;
  int64_t global_step = 0;
  std::vector<std::string> members;
  std::vector<EmbeddingTable> shards;

  /// Rebuilds a logical table from the loaded shards.
  LogicalTable to_logical() &&;
};

CheckpointManifest read_manifest(const std::filesystem::path& dir);

/// Reads a checkpoint and rehouses every record under a
/// `target_num_shards` plan (shard = mix64(key) % target_num_shards).
std::vector<LoadedTable> load_sharded(const std::filesystem::path& dir, int64_t target_num_shards);

/// Human-readable summary: per-table rows, dims, global step and the
/// tensor listing of every file. Throws on any defect.
std::string inspect_checkpoint(const std::filesystem::path& dir);

}  // namespace embstack
