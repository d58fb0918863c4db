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

#include "embstack/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "embstack/safetensors.hpp"

namespace embstack {

namespace fs = std::filesystem;
using json = nlohmann::json;
namespace st = safetensors;

namespace {

std::string shard_file_name(int64_t index, int64_t count) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "shard-%05lld-of-%05lld.safetensors", static_cast<long long>(index),
                static_cast<long long>(count));
  return buf;
}

// Runs fn(i) for i in [0, n) on one thread each; rethrows the first error.
template <typename Fn>
void parallel_for_each(int64_t n, Fn fn) {
  std::mutex mu;
  std::exception_ptr error;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

struct RecordRef {
  int64_t key;
  const EmbeddingTable* shard;
  int64_t slot;
};

struct Record {
  int64_t key;
  std::vector<float> weight, m, v;
  int64_t last_step;
};

struct ParsedCheckpoint {
  CheckpointManifest manifest;
  std::vector<st::File> files;
};

ParsedCheckpoint read_and_validate(const fs::path& dir) {
  ParsedCheckpoint ckpt;
  ckpt.manifest = read_manifest(dir);
  const auto& m = ckpt.manifest;
  ckpt.files.resize(m.files.size());
  parallel_for_each(static_cast<int64_t>(m.files.size()), [&](int64_t f) {
    const fs::path path = dir / m.files[f];
    require(fs::exists(path), ErrorCode::kIo, path.string() + ": listed in manifest but missing");
    ckpt.files[f] = st::read_file(path);
  });
  for (const auto& t : m.tables) {
    require(t.rows_per_file.size() == m.files.size(), ErrorCode::kCorrupt,
            "manifest: table " + t.name + " rows_per_file does not match file count");
    for (size_t f = 0; f < m.files.size(); ++f) {
      const auto& file = ckpt.files[f];
      const std::string source = (dir / m.files[f]).string();
      const int64_t n = t.rows_per_file[f];
      auto expect = [&](const std::string& suffix, st::DType dtype, std::vector<int64_t> shape) {
        const st::Tensor* tensor = file.find(t.name + suffix);
        require(tensor != nullptr, ErrorCode::kCorrupt, source + ": missing tensor " + t.name + suffix);
        require(tensor->dtype == dtype && tensor->shape == shape, ErrorCode::kCorrupt,
                source + ": tensor " + t.name + suffix + " has unexpected dtype or shape");
      };
      expect(".ids", st::DType::kI64, {n});
      expect(".last_step", st::DType::kI64, {n});
      expect(".weight", st::DType::kF32, {n, t.dim});
      expect(".m", st::DType::kF32, {n, t.dim});
      expect(".v", st::DType::kF32, {n, t.dim});
    }
  }
  return ckpt;
}

}  // namespace

TableSnapshot TableSnapshot::of(const LogicalTable& table, int64_t global_step) {
  TableSnapshot s;
  s.name = table.name();
  s.dim = table.dim();
  s.global_step = global_step;
  s.members = table.members();
  for (const auto& shard : table.shards()) s.shards.push_back(&shard);
  return s;
}

TableSnapshot TableSnapshot::of(const EmbeddingTable& table, int64_t global_step) {
  TableSnapshot s;
  s.name = table.name();
  s.dim = table.dim();
  s.global_step = global_step;
  s.shards.push_back(&table);
  return s;
}

std::string CheckpointManifest::to_json() const {
  json j;
  j["version"] = version;
  j["files"] = files;
  j["tables"] = json::array();
  for (const auto& t : tables) {
    json e = {{"name", t.name},
              {"dim", t.dim},
              {"rows_per_file", t.rows_per_file},
              {"global_step", t.global_step},
              {"seed", t.seed},
              {"block_size", t.block_size},
              {"members", t.members}};
    e["evict_threshold"] = t.evict_threshold ? json(*t.evict_threshold) : json(nullptr);
    j["tables"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

CheckpointManifest CheckpointManifest::from_json(const std::string& text, const std::string& source) {
  CheckpointManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<int>();
    if (m.version != kCheckpointVersion) {
      fail(ErrorCode::kFormat, source + ": unknown checkpoint format version " + std::to_string(m.version));
    }
    m.files = j.at("files").get<std::vector<std::string>>();
    for (const auto& e : j.at("tables")) {
      ManifestTable t;
      t.name = e.at("name").get<std::string>();
      t.dim = e.at("dim").get<int64_t>();
      t.rows_per_file = e.at("rows_per_file").get<std::vector<int64_t>>();
      t.global_step = e.at("global_step").get<int64_t>();
      t.seed = e.value("seed", uint64_t{0});
      t.block_size = e.value("block_size", int64_t{1024});
      if (e.contains("evict_threshold") && !e["evict_threshold"].is_null()) {
        t.evict_threshold = e["evict_threshold"].get<int64_t>();
      }
      t.members = e.value("members", std::vector<std::string>{});
      m.tables.push_back(std::move(t));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kCorrupt, source + ": malformed manifest: " + ex.what());
  }
  return m;
}

CheckpointManifest save_sharded(const std::vector<TableSnapshot>& tables, const fs::path& dir,
                                int64_t num_files) {
  require(num_files >= 1, ErrorCode::kInvalidArgument, "save_sharded: num_files must be >= 1");
  record_invocation(Module::kCheckpoint);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  fs::remove(dir / kManifestName, ec);

  CheckpointManifest manifest;
  for (int64_t f = 0; f < num_files; ++f) manifest.files.push_back(shard_file_name(f, num_files));

  std::vector<std::vector<st::Tensor>> file_tensors(static_cast<size_t>(num_files));
  std::unordered_set<std::string> names;
  for (const auto& table : tables) {
    require(names.insert(table.name).second, ErrorCode::kInvalidArgument,
            "save_sharded: duplicate table name " + table.name);
    require(!table.shards.empty(), ErrorCode::kInvalidArgument, "save_sharded: table " + table.name + " has no shards");
    std::vector<std::vector<RecordRef>> per_file(static_cast<size_t>(num_files));
    for (const EmbeddingTable* shard : table.shards) {
      require(shard->dim() == table.dim, ErrorCode::kInvalidArgument,
              "save_sharded: shard " + shard->name() + " dim mismatch");
      const auto& map = shard->id_map();
      for (int64_t s = 0; s < map.high_water(); ++s) {
        if (!map.is_live(s)) continue;
        const int64_t key = map.id_at(s);
        per_file[mix64(static_cast<uint64_t>(key)) % static_cast<uint64_t>(num_files)].push_back({key, shard, s});
      }
    }

    ManifestTable entry;
    entry.name = table.name;
    entry.dim = table.dim;
    entry.global_step = table.global_step;
    entry.members = table.members;
    const auto& opts = table.shards.front()->options();
    entry.seed = opts.seed;
    entry.block_size = opts.block_size;
    if (opts.evict_threshold != kNeverEvict) entry.evict_threshold = opts.evict_threshold;

    for (int64_t f = 0; f < num_files; ++f) {
      auto& recs = per_file[f];
      std::sort(recs.begin(), recs.end(), [](const RecordRef& a, const RecordRef& b) { return a.key < b.key; });
      for (size_t i = 1; i < recs.size(); ++i) {
        require(recs[i].key != recs[i - 1].key, ErrorCode::kInvalidArgument,
                "save_sharded: key " + std::to_string(recs[i].key) + " present in two shards of " + table.name);
      }
      const auto n = static_cast<int64_t>(recs.size());
      const int64_t dim = table.dim;
      std::vector<int64_t> ids(n), last(n);
      std::vector<float> w(n * dim), m(n * dim), v(n * dim);
      for (int64_t i = 0; i < n; ++i) {
        const auto& r = recs[i];
        const auto& store = r.shard->store();
        ids[i] = r.key;
        last[i] = store.last_step(r.slot);
        for (int64_t c = 0; c < dim; ++c) {
          w[i * dim + c] = store.param(r.slot)(c);
          m[i * dim + c] = store.m(r.slot)(c);
          v[i * dim + c] = store.v(r.slot)(c);
        }
      }
      auto& out = file_tensors[f];
      out.push_back(st::Tensor::from_int64(table.name + ".ids", {n}, ids));
      out.push_back(st::Tensor::from_float_rows(table.name + ".weight", n, dim, w));
      out.push_back(st::Tensor::from_float_rows(table.name + ".m", n, dim, m));
      out.push_back(st::Tensor::from_float_rows(table.name + ".v", n, dim, v));
      out.push_back(st::Tensor::from_int64(table.name + ".last_step", {n}, last));
      entry.rows_per_file.push_back(n);
    }
    manifest.tables.push_back(std::move(entry));
  }

  parallel_for_each(num_files, [&](int64_t f) { st::write_file(dir / manifest.files[f], file_tensors[f]); });

  const std::string text = manifest.to_json();
  const fs::path tmp = dir / (std::string(kManifestName) + ".tmp");
  st::write_bytes(tmp, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
  fs::rename(tmp, dir / kManifestName, ec);
  require(!ec, ErrorCode::kIo, "cannot commit manifest in " + dir.string() + ": " + ec.message());
  return manifest;
}

CheckpointManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  require(fs::exists(path), ErrorCode::kIo, dir.string() + ": no " + kManifestName + " (incomplete or not a checkpoint)");
  const auto bytes = st::read_bytes(path);
  return CheckpointManifest::from_json(std::string(bytes.begin(), bytes.end()), path.string());
}

LogicalTable LoadedTable::to_logical() && {
  return LogicalTable(name, dim, std::move(members), std::move(shards));
}

std::vector<LoadedTable> load_sharded(const fs::path& dir, int64_t target_num_shards) {
  require(target_num_shards >= 1, ErrorCode::kInvalidArgument, "load_sharded: target_num_shards must be >= 1");
  record_invocation(Module::kCheckpoint);
  const ParsedCheckpoint ckpt = read_and_validate(dir);
  const ShardPlan plan(target_num_shards);

  std::vector<LoadedTable> out;
  for (const auto& t : ckpt.manifest.tables) {
    std::vector<Record> records;
    for (size_t f = 0; f < ckpt.files.size(); ++f) {
      const auto& file = ckpt.files[f];
      const auto ids = file.find(t.name + ".ids")->to_int64();
      const auto last = file.find(t.name + ".last_step")->to_int64();
      const auto w = file.find(t.name + ".weight")->to_floats();
      const auto m = file.find(t.name + ".m")->to_floats();
      const auto v = file.find(t.name + ".v")->to_floats();
      for (size_t i = 0; i < ids.size(); ++i) {
        const auto row = [&](const std::vector<float>& x) {
          return std::vector<float>(x.begin() + static_cast<std::ptrdiff_t>(i * t.dim),
                                    x.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.dim));
        };
        records.push_back({ids[i], row(w), row(m), row(v), last[i]});
      }
    }
    std::sort(records.begin(), records.end(), [](const Record& a, const Record& b) { return a.key < b.key; });
    for (size_t i = 1; i < records.size(); ++i) {
      require(records[i].key != records[i - 1].key, ErrorCode::kCorrupt,
              dir.string() + ": key " + std::to_string(records[i].key) + " stored twice in table " + t.name);
    }

    LoadedTable lt;
    lt.name = t.name;
    lt.dim = t.dim;
    lt.global_step = t.global_step;
    lt.members = t.members;
    TableOptions opts;
    opts.dim = t.dim;
    opts.seed = t.seed;
    opts.block_size = t.block_size;
    opts.evict_threshold = t.evict_threshold.value_or(kNeverEvict);
    for (int64_t s = 0; s < target_num_shards; ++s) {
      lt.shards.emplace_back(target_num_shards == 1 ? t.name : t.name + "/shard" + std::to_string(s), opts);
    }
    for (const auto& r : records) {
      restore_row(lt.shards[plan.shard_of(r.key)], r.key, r.weight, r.m, r.v, r.last_step);
    }
    out.push_back(std::move(lt));
  }
  return out;
}

std::string inspect_checkpoint(const fs::path& dir) {
  record_invocation(Module::kCheckpoint);
  const ParsedCheckpoint ckpt = read_and_validate(dir);
  const auto& m = ckpt.manifest;
  std::ostringstream os;
  os << "version " << m.version << "\n";
  os << "files " << m.files.size() << "\n";
  for (const auto& t : m.tables) {
    int64_t rows = 0;
    for (int64_t n : t.rows_per_file) rows += n;
    os << "table " << t.name << " dim=" << t.dim << " rows=" << rows << " global_step=" << t.global_step
       << " rows_per_file=[";
    for (size_t i = 0; i < t.rows_per_file.size(); ++i) os << (i ? "," : "") << t.rows_per_file[i];
    os << "]\n";
  }
  for (size_t f = 0; f < m.files.size(); ++f) {
    os << "file " << m.files[f] << "\n";
    for (const auto& tensor : ckpt.files[f].tensors) {
      os << "  " << tensor.name << " " << st::dtype_name(tensor.dtype) << " [";
      for (size_t i = 0; i < tensor.shape.size(); ++i) os << (i ? "," : "") << tensor.shape[i];
      os << "]\n";
    }
  }
  return os.str();
}

}  // namespace embstack
