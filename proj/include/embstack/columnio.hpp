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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "embstack/ragged.hpp"

namespace embstack::columnio {

inline constexpr char kMagic[4] = {'R', 'C', 'O', 'L'};
inline constexpr uint32_t kVersion = 1;

enum class ColumnType { kFloat32, kInt64, kBytes };

std::string_view type_name(ColumnType t);
ColumnType parse_type(std::string_view name);

struct ColumnSpec {
  std::string name;
  ColumnType dtype = ColumnType::kInt64;
  /// Non-ragged columns hold exactly one element per row and store no row
  /// offsets.
  bool ragged = true;
  bool operator==(const ColumnSpec&) const = default;
};

using ColumnSchema = std::vector<ColumnSpec>;
using ColumnData = std::variant<RaggedFloats, RaggedIds, RaggedBytes>;

struct Column {
  ColumnSpec spec;
  ColumnData data;
};

int64_t num_rows(const ColumnData& data);

struct ChunkInfo {
  /// Relative to the first byte after the header JSON.
  uint64_t byte_offset = 0;
  uint64_t byte_len = 0;
  int64_t rows = 0;
};

struct DatasetHeader {
  ColumnSchema schema;
  std::vector<ChunkInfo> chunks;
  /// Absolute file offset of the chunk region.
  uint64_t data_start = 0;
};

/// Writes columns in schema order, `chunk_rows` rows per chunk; with
/// `compress` every column payload is DEFLATE-compressed.
void write_dataset(const std::vector<Column>& columns, const std::filesystem::path& path, int64_t chunk_rows,
                   bool compress);

DatasetHeader read_header(const std::filesystem::path& path);

/// Decodes one chunk; `selected[i]` false skips column i without reading
/// its payload. Skipped columns are absent from the result.
std::vector<std::optional<ColumnData>> read_chunk(const std::filesystem::path& path, const DatasetHeader& header,
                                                  size_t chunk_index, const std::vector<bool>& selected);

struct Batch {
  int64_t num_rows = 0;
  std::map<std::string, ColumnData> columns;
};

struct ReaderOptions {
  int64_t shard_index = 0;
  int64_t num_shards = 1;
  int64_t batch_rows = 256;
  /// Batches decoded ahead on a background thread; 0 decodes inline.
  int64_t prefetch_depth = 2;
  /// Columns to decode; empty selects all.
  std::vector<std::string> columns;
};

/// Iterates the batches of one shard. Chunks are assigned round-robin by
/// global chunk index (files in the given order); batches are assembled
/// across chunk boundaries and arrive in chunk order.
class BatchReader {
 public:
  BatchReader(std::vector<std::filesystem::path> paths, ReaderOptions options);
  ~BatchReader();
  BatchReader(const BatchReader&) = delete;
  BatchReader& operator=(const BatchReader&) = delete;

  std::optional<Batch> next();
  const ColumnSchema& schema() const noexcept { return schema_; }

 private:
  struct ChunkRef {
    size_t file;
    size_t chunk;
  };

  std::optional<Batch> produce();
  void producer_loop();

  std::vector<std::filesystem::path> paths_;
  ReaderOptions options_;
  ColumnSchema schema_;
  std::vector<DatasetHeader> headers_;
  std::vector<bool> selected_;
  std::vector<ChunkRef> chunks_;
  size_t next_chunk_ = 0;
  std::vector<ColumnData> pending_;
  int64_t pending_rows_ = 0;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::variant<Batch, std::exception_ptr, std::monostate>> queue_;
  bool stop_ = false;
  bool finished_ = false;
  std::thread worker_;
};

std::unique_ptr<BatchReader> open_reader(std::vector<std::filesystem::path> paths, ReaderOptions options);

}  // namespace embstack::columnio
