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

#include "embstack/columnio.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>
#include <zlib.h>

namespace embstack::columnio {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

std::vector<uint8_t> deflate_raw(const std::vector<uint8_t>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    fail(ErrorCode::kIo, "deflate: init failed");
  }
  std::vector<uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  deflateEnd(&zs);
  require(rc == Z_STREAM_END, ErrorCode::kIo, "deflate: compression failed");
  out.resize(produced);
  return out;
}

// Returns false on malformed input or a size mismatch.
bool inflate_raw(const uint8_t* in, size_t in_len, std::vector<uint8_t>& out, size_t raw_len) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) return false;
  out.resize(raw_len);
  zs.next_in = const_cast<Bytef*>(in);
  zs.avail_in = static_cast<uInt>(in_len);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const bool ok = rc == Z_STREAM_END && zs.total_out == raw_len && zs.avail_in == 0;
  inflateEnd(&zs);
  return ok;
}

template <typename T>
Ragged<T> slice_rows(const Ragged<T>& r, int64_t begin, int64_t end) {
  const auto& off = r.row_offsets();
  std::vector<int64_t> offsets(off.begin() + begin, off.begin() + end + 1);
  const int64_t base = offsets.front();
  for (auto& o : offsets) o -= base;
  std::vector<T> values(r.values().begin() + off[begin], r.values().begin() + off[end]);
  return Ragged<T>(std::move(values), std::move(offsets), r.dim());
}

template <typename T>
Ragged<T> concat_rows(const Ragged<T>& a, const Ragged<T>& b) {
  std::vector<T> values = a.values();
  values.insert(values.end(), b.values().begin(), b.values().end());
  std::vector<int64_t> offsets = a.row_offsets();
  const int64_t base = offsets.back();
  for (size_t i = 1; i < b.row_offsets().size(); ++i) offsets.push_back(base + b.row_offsets()[i]);
  return Ragged<T>(std::move(values), std::move(offsets), a.dim());
}

ColumnData slice_column(const ColumnData& c, int64_t begin, int64_t end) {
  return std::visit([&](const auto& r) -> ColumnData { return slice_rows(r, begin, end); }, c);
}

ColumnData concat_column(const ColumnData& a, const ColumnData& b) {
  return std::visit(
      [&](const auto& ra) -> ColumnData {
        using R = std::decay_t<decltype(ra)>;
        return concat_rows(ra, std::get<R>(b));
      },
      a);
}

ColumnData empty_column(ColumnType t) {
  switch (t) {
    case ColumnType::kFloat32: return RaggedFloats();
    case ColumnType::kInt64: return RaggedIds();
    case ColumnType::kBytes: return RaggedBytes();
  }
  return RaggedIds();
}

bool type_matches(const ColumnData& data, ColumnType t) {
  switch (t) {
    case ColumnType::kFloat32: return std::holds_alternative<RaggedFloats>(data);
    case ColumnType::kInt64: return std::holds_alternative<RaggedIds>(data);
    case ColumnType::kBytes: return std::holds_alternative<RaggedBytes>(data);
  }
  return false;
}

// Raw (uncompressed) column payload: row offsets when ragged, then values.
std::vector<uint8_t> encode_column(const ColumnData& data, bool ragged) {
  std::vector<uint8_t> raw;
  std::visit(
      [&](const auto& r) {
        using T = typename std::decay_t<decltype(r)>::value_type;
        if (ragged) {
          for (int64_t o : r.row_offsets()) put_u64(raw, static_cast<uint64_t>(o));
        }
        if constexpr (std::is_same_v<T, float>) {
          for (float v : r.values()) put_u32(raw, std::bit_cast<uint32_t>(v));
        } else if constexpr (std::is_same_v<T, int64_t>) {
          for (int64_t v : r.values()) put_u64(raw, static_cast<uint64_t>(v));
        } else {
          uint64_t pos = 0;
          put_u64(raw, 0);
          for (const auto& s : r.values()) {
            pos += s.size();
            put_u64(raw, pos);
          }
          for (const auto& s : r.values()) raw.insert(raw.end(), s.begin(), s.end());
        }
      },
      data);
  return raw;
}

ColumnData decode_column(const std::vector<uint8_t>& raw, const ColumnSpec& spec, int64_t rows) {
  size_t pos = 0;
  std::vector<int64_t> offsets;
  if (spec.ragged) {
    const size_t need = static_cast<size_t>(rows + 1) * 8;
    require(raw.size() >= need, ErrorCode::kCorrupt, "column " + spec.name + ": truncated row offsets");
    offsets.resize(static_cast<size_t>(rows) + 1);
    for (size_t i = 0; i < offsets.size(); ++i) offsets[i] = static_cast<int64_t>(get_u64(&raw[8 * i]));
    pos = need;
  } else {
    offsets.resize(static_cast<size_t>(rows) + 1);
    for (size_t i = 0; i < offsets.size(); ++i) offsets[i] = static_cast<int64_t>(i);
  }
  require(offsets.front() == 0 && std::is_sorted(offsets.begin(), offsets.end()), ErrorCode::kCorrupt,
          "column " + spec.name + ": invalid row offsets");
  const auto count = static_cast<size_t>(offsets.back());
  const size_t remaining = raw.size() - pos;
  const uint8_t* p = raw.data() + pos;
  switch (spec.dtype) {
    case ColumnType::kFloat32: {
      require(remaining == count * 4, ErrorCode::kCorrupt, "column " + spec.name + ": value bytes mismatch");
      std::vector<float> values(count);
      for (size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      return RaggedFloats(std::move(values), std::move(offsets));
    }
    case ColumnType::kInt64: {
      require(remaining == count * 8, ErrorCode::kCorrupt, "column " + spec.name + ": value bytes mismatch");
      std::vector<int64_t> values(count);
      for (size_t i = 0; i < count; ++i) values[i] = static_cast<int64_t>(get_u64(p + 8 * i));
      return RaggedIds(std::move(values), std::move(offsets));
    }
    case ColumnType::kBytes: {
      const size_t table = (count + 1) * 8;
      require(remaining >= table, ErrorCode::kCorrupt, "column " + spec.name + ": truncated string offsets");
      std::vector<uint64_t> starts(count + 1);
      for (size_t i = 0; i <= count; ++i) starts[i] = get_u64(p + 8 * i);
      require(starts.front() == 0 && std::is_sorted(starts.begin(), starts.end()) &&
                  remaining - table == starts.back(),
              ErrorCode::kCorrupt, "column " + spec.name + ": invalid string offsets");
      std::vector<std::string> values(count);
      const char* chars = reinterpret_cast<const char*>(p + table);
      for (size_t i = 0; i < count; ++i) values[i].assign(chars + starts[i], starts[i + 1] - starts[i]);
      return RaggedBytes(std::move(values), std::move(offsets));
    }
  }
  fail(ErrorCode::kCorrupt, "column " + spec.name + ": unknown dtype");
}

json schema_json(const ColumnSchema& schema) {
  json j = json::array();
  for (const auto& c : schema) j.push_back({{"name", c.name}, {"dtype", type_name(c.dtype)}, {"ragged", c.ragged}});
  return j;
}

}  // namespace

std::string_view type_name(ColumnType t) {
  switch (t) {
    case ColumnType::kFloat32: return "float32";
    case ColumnType::kInt64: return "int64";
    case ColumnType::kBytes: return "bytes";
  }
  return "?";
}

ColumnType parse_type(std::string_view name) {
  if (name == "float32") return ColumnType::kFloat32;
  if (name == "int64") return ColumnType::kInt64;
  if (name == "bytes") return ColumnType::kBytes;
  fail(ErrorCode::kFormat, "columnio: unknown column dtype " + std::string(name));
}

int64_t num_rows(const ColumnData& data) {
  return std::visit([](const auto& r) { return r.num_rows(); }, data);
}

void write_dataset(const std::vector<Column>& columns, const fs::path& path, int64_t chunk_rows, bool compress) {
  require(chunk_rows >= 1, ErrorCode::kInvalidArgument, "write_dataset: chunk_rows must be >= 1");
  record_invocation(Module::kColumnIO);
  ColumnSchema schema;
  std::unordered_set<std::string> names;
  int64_t total_rows = columns.empty() ? 0 : num_rows(columns.front().data);
  for (const auto& c : columns) {
    require(!c.spec.name.empty() && names.insert(c.spec.name).second, ErrorCode::kInvalidArgument,
            "write_dataset: column names must be unique and non-empty (" + c.spec.name + ")");
    require(type_matches(c.data, c.spec.dtype), ErrorCode::kInvalidArgument,
            "write_dataset: column " + c.spec.name + " data does not match dtype");
    require(std::visit([](const auto& r) { return r.dim(); }, c.data) == 1, ErrorCode::kInvalidArgument,
            "write_dataset: column " + c.spec.name + " must have element width 1");
    require(num_rows(c.data) == total_rows, ErrorCode::kInvalidArgument,
            "write_dataset: column " + c.spec.name + " has " + std::to_string(num_rows(c.data)) + " rows, expected " +
                std::to_string(total_rows));
    if (!c.spec.ragged) {
      std::visit(
          [&](const auto& r) {
            for (int64_t i = 0; i < r.num_rows(); ++i) {
              require(r.row_length(i) == 1, ErrorCode::kInvalidArgument,
                      "write_dataset: non-ragged column " + c.spec.name + " row " + std::to_string(i) +
                          " does not hold exactly one element");
            }
          },
          c.data);
    }
    schema.push_back(c.spec);
  }

  std::vector<uint8_t> body;
  json index = json::array();
  for (int64_t begin = 0; begin < total_rows; begin += chunk_rows) {
    const int64_t end = std::min(total_rows, begin + chunk_rows);
    const uint64_t start = body.size();
    for (const auto& c : columns) {
      const auto raw = encode_column(slice_column(c.data, begin, end), c.spec.ragged);
      const std::vector<uint8_t> stored = compress ? deflate_raw(raw) : raw;
      body.push_back(compress ? 1 : 0);
      put_u64(body, raw.size());
      put_u64(body, stored.size());
      body.insert(body.end(), stored.begin(), stored.end());
    }
    index.push_back({{"byte_offset", start}, {"byte_len", body.size() - start}, {"rows", end - begin}});
  }

  const std::string header = json{{"schema", schema_json(schema)}, {"chunk_index", index}}.dump();
  std::vector<uint8_t> prefix(kMagic, kMagic + 4);
  put_u32(prefix, kVersion);
  put_u64(prefix, header.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(prefix.data()), static_cast<std::streamsize>(prefix.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

DatasetHeader read_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);
  uint8_t prefix[16];
  in.read(reinterpret_cast<char*>(prefix), 16);
  require(in.gcount() == 16 && std::memcmp(prefix, kMagic, 4) == 0, ErrorCode::kFormat,
          path.string() + ": not an RCOL dataset");
  const uint32_t version = get_u32(prefix + 4);
  require(version == kVersion, ErrorCode::kFormat,
          path.string() + ": unsupported dataset version " + std::to_string(version));
  const uint64_t header_len = get_u64(prefix + 8);
  require(header_len <= file_size - 16, ErrorCode::kCorrupt, path.string() + ": header length exceeds file size");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));

  DatasetHeader h;
  h.data_start = 16 + header_len;
  try {
    const json j = json::parse(text);
    for (const auto& c : j.at("schema")) {
      h.schema.push_back({c.at("name").get<std::string>(), parse_type(c.at("dtype").get<std::string>()),
                          c.at("ragged").get<bool>()});
    }
    for (const auto& c : j.at("chunk_index")) {
      h.chunks.push_back({c.at("byte_offset").get<uint64_t>(), c.at("byte_len").get<uint64_t>(),
                          c.at("rows").get<int64_t>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, path.string() + ": malformed header: " + e.what());
  }
  for (size_t i = 0; i < h.chunks.size(); ++i) {
    const auto& c = h.chunks[i];
    require(c.rows >= 0 && c.byte_offset + c.byte_len <= file_size - h.data_start, ErrorCode::kCorrupt,
            path.string() + ": chunk " + std::to_string(i) + " extends past end of file");
  }
  return h;
}

std::vector<std::optional<ColumnData>> read_chunk(const fs::path& path, const DatasetHeader& header,
                                                  size_t chunk_index, const std::vector<bool>& selected) {
  record_invocation(Module::kColumnIO);
  const std::string where = path.string() + ": chunk " + std::to_string(chunk_index);
  require(chunk_index < header.chunks.size(), ErrorCode::kOutOfRange, where + " does not exist");
  const ChunkInfo& info = header.chunks[chunk_index];
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());

  std::vector<std::optional<ColumnData>> out(header.schema.size());
  uint64_t cursor = 0;
  try {
    for (size_t c = 0; c < header.schema.size(); ++c) {
      require(cursor + 17 <= info.byte_len, ErrorCode::kCorrupt, "truncated column header");
      uint8_t head[17];
      in.seekg(static_cast<std::streamoff>(header.data_start + info.byte_offset + cursor));
      in.read(reinterpret_cast<char*>(head), 17);
      require(in.gcount() == 17, ErrorCode::kCorrupt, "short read");
      const uint8_t flag = head[0];
      const uint64_t raw_len = get_u64(head + 1);
      const uint64_t stored_len = get_u64(head + 9);
      require(flag <= 1, ErrorCode::kCorrupt, "bad compression flag");
      require(stored_len <= info.byte_len - cursor - 17, ErrorCode::kCorrupt, "column payload overruns chunk");
      cursor += 17;
      if (selected[c]) {
        std::vector<uint8_t> stored(stored_len);
        in.read(reinterpret_cast<char*>(stored.data()), static_cast<std::streamsize>(stored_len));
        require(static_cast<uint64_t>(in.gcount()) == stored_len, ErrorCode::kCorrupt, "short read");
        std::vector<uint8_t> raw;
        if (flag == 1) {
          require(inflate_raw(stored.data(), stored.size(), raw, raw_len), ErrorCode::kCorrupt,
                  "column " + header.schema[c].name + ": DEFLATE stream invalid");
        } else {
          require(raw_len == stored_len, ErrorCode::kCorrupt, "raw and stored lengths differ");
          raw = std::move(stored);
        }
        out[c] = decode_column(raw, header.schema[c], info.rows);
      }
      cursor += stored_len;
    }
    require(cursor == info.byte_len, ErrorCode::kCorrupt, "trailing bytes in chunk");
  } catch (const Error& e) {
    fail(ErrorCode::kCorrupt, where + ": " + e.what());
  }
  return out;
}

BatchReader::BatchReader(std::vector<fs::path> paths, ReaderOptions options)
    : paths_(std::move(paths)), options_(std::move(options)) {
  require(options_.num_shards >= 1 && options_.shard_index >= 0 && options_.shard_index < options_.num_shards,
          ErrorCode::kInvalidArgument, "open_reader: need 0 <= shard_index < num_shards");
  require(options_.batch_rows >= 1, ErrorCode::kInvalidArgument, "open_reader: batch_rows must be >= 1");
  require(options_.prefetch_depth >= 0, ErrorCode::kInvalidArgument, "open_reader: prefetch_depth must be >= 0");
  require(!paths_.empty(), ErrorCode::kInvalidArgument, "open_reader: no input files");
  record_invocation(Module::kColumnIO);

  int64_t global = 0;
  for (size_t f = 0; f < paths_.size(); ++f) {
    headers_.push_back(read_header(paths_[f]));
    if (f == 0) {
      schema_ = headers_[0].schema;
    } else {
      require(headers_[f].schema == schema_, ErrorCode::kFormat,
              paths_[f].string() + ": schema mismatch with " + paths_[0].string());
    }
    for (size_t c = 0; c < headers_[f].chunks.size(); ++c, ++global) {
      if (global % options_.num_shards == options_.shard_index) chunks_.push_back({f, c});
    }
  }

  selected_.assign(schema_.size(), options_.columns.empty());
  for (const auto& name : options_.columns) {
    auto it = std::find_if(schema_.begin(), schema_.end(), [&](const ColumnSpec& s) { return s.name == name; });
    require(it != schema_.end(), ErrorCode::kInvalidArgument, "open_reader: unknown column " + name);
    selected_[it - schema_.begin()] = true;
  }
  for (size_t c = 0; c < schema_.size(); ++c) {
    if (selected_[c]) pending_.push_back(empty_column(schema_[c].dtype));
  }

  if (options_.prefetch_depth > 0) worker_ = std::thread([this] { producer_loop(); });
}

BatchReader::~BatchReader() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::optional<Batch> BatchReader::produce() {
  while (pending_rows_ < options_.batch_rows && next_chunk_ < chunks_.size()) {
    const ChunkRef ref = chunks_[next_chunk_++];
    auto decoded = read_chunk(paths_[ref.file], headers_[ref.file], ref.chunk, selected_);
    size_t k = 0;
    for (size_t c = 0; c < decoded.size(); ++c) {
      if (!selected_[c]) continue;
      pending_[k] = concat_column(pending_[k], *decoded[c]);
      ++k;
    }
    pending_rows_ += headers_[ref.file].chunks[ref.chunk].rows;
  }
  if (pending_rows_ == 0) return std::nullopt;
  const int64_t take = std::min(options_.batch_rows, pending_rows_);
  Batch batch;
  batch.num_rows = take;
  size_t k = 0;
  for (size_t c = 0; c < schema_.size(); ++c) {
    if (!selected_[c]) continue;
    batch.columns.emplace(schema_[c].name, slice_column(pending_[k], 0, take));
    pending_[k] = slice_column(pending_[k], take, pending_rows_);
    ++k;
  }
  pending_rows_ -= take;
  return batch;
}

void BatchReader::producer_loop() {
  const auto depth = static_cast<size_t>(options_.prefetch_depth);
  for (;;) {
    std::variant<Batch, std::exception_ptr, std::monostate> item;
    try {
      auto b = produce();
      if (b) {
        item = std::move(*b);
      } else {
        item = std::monostate{};
      }
    } catch (...) {
      item = std::current_exception();
    }
    const bool last = !std::holds_alternative<Batch>(item);
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || queue_.size() < depth; });
      if (stop_) return;
      queue_.push_back(std::move(item));
    }
    cv_.notify_all();
    if (last) return;
  }
}

std::optional<Batch> BatchReader::next() {
  if (finished_) return std::nullopt;
  if (options_.prefetch_depth == 0) {
    auto b = produce();
    if (!b) finished_ = true;
    return b;
  }
  std::variant<Batch, std::exception_ptr, std::monostate> item;
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !queue_.empty(); });
    item = std::move(queue_.front());
    queue_.pop_front();
  }
  cv_.notify_all();
  if (auto* err = std::get_if<std::exception_ptr>(&item)) {
    finished_ = true;
    std::rethrow_exception(*err);
  }
  if (std::holds_alternative<std::monostate>(item)) {
    finished_ = true;
    return std::nullopt;
  }
  return std::move(std::get<Batch>(item));
}

std::unique_ptr<BatchReader> open_reader(std::vector<fs::path> paths, ReaderOptions options) {
  return std::make_unique<BatchReader>(std::move(paths), std::move(options));
}

}  // namespace embstack::columnio
