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

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "embstack/columnio.hpp"
#include "test_util.hpp"

namespace embstack::columnio {
namespace {

namespace fs = std::filesystem;

std::vector<Column> random_columns(int64_t rows, uint64_t seed, int64_t rid_base = 0) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int64_t>> ids(rows);
  std::vector<std::vector<float>> floats(rows);
  std::vector<std::vector<std::string>> bytes(rows);
  std::vector<std::vector<int64_t>> rid(rows);
  for (int64_t r = 0; r < rows; ++r) {
    rid[r] = {rid_base + r};
    const auto len = rng() % 4 == 0 ? 0 : rng() % 9;  // empty rows common
    for (uint64_t k = 0; k < len; ++k) {
      ids[r].push_back(static_cast<int64_t>(rng()));
      floats[r].push_back(std::ldexp(static_cast<float>(rng() % 100000) - 50000.0f, -7));
      std::string s(rng() % 5, '\0');  // includes empty strings
      for (auto& ch : s) ch = static_cast<char>(rng());
      bytes[r].push_back(s);
    }
  }
  return {{{"rid", ColumnType::kInt64, false}, RaggedIds::from_rows(rid)},
          {{"ids", ColumnType::kInt64, true}, RaggedIds::from_rows(ids)},
          {{"vals", ColumnType::kFloat32, true}, RaggedFloats::from_rows(floats)},
          {{"names", ColumnType::kBytes, true}, RaggedBytes::from_rows(bytes)}};
}

std::vector<Batch> drain(const fs::path& path, ReaderOptions opts) {
  auto reader = open_reader({path}, std::move(opts));
  std::vector<Batch> out;
  while (auto b = reader->next()) out.push_back(std::move(*b));
  return out;
}

template <typename T>
Ragged<T> concat(const std::vector<Batch>& batches, const std::string& name) {
  std::vector<std::vector<T>> rows;
  for (const auto& b : batches) {
    for (auto& r : std::get<Ragged<T>>(b.columns.at(name)).to_rows()) rows.push_back(std::move(r));
  }
  return Ragged<T>::from_rows(rows);
}

TEST(ColumnIO, ChunkCeilingSplit) {
  testutil::TempDir dir;
  write_dataset(random_columns(10, 1), dir / "d.rcol", 4, false);
  const auto h = read_header(dir / "d.rcol");
  ASSERT_EQ(h.chunks.size(), 3u);
  EXPECT_EQ(h.chunks[0].rows, 4);
  EXPECT_EQ(h.chunks[1].rows, 4);
  EXPECT_EQ(h.chunks[2].rows, 2);
  EXPECT_EQ(h.schema.size(), 4u);
}

TEST(ColumnIO, Magic) {
  testutil::TempDir dir;
  write_dataset(random_columns(3, 1), dir / "d.rcol", 4, true);
  std::ifstream in(dir / "d.rcol", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "RCOL");
}

TEST(ColumnIO, WriteErrors) {
  testutil::TempDir dir;
  auto cols = random_columns(5, 1);
  cols.push_back({{"short", ColumnType::kInt64, true}, RaggedIds::from_rows({{1}})});
  EXPECT_THROW(write_dataset(cols, dir / "d.rcol", 4, false), Error);
  EXPECT_THROW(write_dataset(random_columns(5, 1), dir / "e.rcol", 0, false), Error);
}

TEST(ColumnIO, RoundTripAllTypes) {
  for (bool compress : {false, true}) {
    testutil::TempDir dir;
    const auto cols = random_columns(1000, 2);
    write_dataset(cols, dir / "d.rcol", 64, compress);
    ReaderOptions o;
    o.batch_rows = 100;
    const auto batches = drain(dir / "d.rcol", o);
    ASSERT_EQ(batches.size(), 10u);
    EXPECT_EQ(concat<int64_t>(batches, "ids"), std::get<RaggedIds>(cols[1].data));
    EXPECT_EQ(concat<float>(batches, "vals"), std::get<RaggedFloats>(cols[2].data));
    EXPECT_EQ(concat<std::string>(batches, "names"), std::get<RaggedBytes>(cols[3].data));
  }
}

TEST(ColumnIO, CompressionTransparent) {
  testutil::TempDir dir;
  const auto cols = random_columns(300, 3);
  write_dataset(cols, dir / "a.rcol", 50, false);
  write_dataset(cols, dir / "b.rcol", 50, true);
  ReaderOptions o;
  o.batch_rows = 37;
  const auto a = drain(dir / "a.rcol", o);
  const auto b = drain(dir / "b.rcol", o);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].num_rows, b[i].num_rows);
    EXPECT_EQ(a[i].columns, b[i].columns);
  }
}

TEST(ColumnIO, EmptyDataset) {
  testutil::TempDir dir;
  write_dataset(random_columns(0, 1), dir / "d.rcol", 4, true);
  EXPECT_TRUE(read_header(dir / "d.rcol").chunks.empty());
  EXPECT_TRUE(drain(dir / "d.rcol", {}).empty());
}

TEST(ColumnIO, Projection) {
  testutil::TempDir dir;
  std::vector<Column> cols;
  for (int c = 0; c < 100; ++c) {
    std::vector<std::vector<float>> rows(20, std::vector<float>{static_cast<float>(c)});
    cols.push_back({{"f" + std::to_string(c), ColumnType::kFloat32, false}, RaggedFloats::from_rows(rows)});
  }
  write_dataset(cols, dir / "d.rcol", 8, true);
  ReaderOptions o;
  o.columns = {"f7", "f42"};
  o.batch_rows = 5;
  for (const auto& b : drain(dir / "d.rcol", o)) {
    ASSERT_EQ(b.columns.size(), 2u);
    EXPECT_EQ(std::get<RaggedFloats>(b.columns.at("f42")).values(), std::vector<float>(5, 42.0f));
  }
  o.columns = {"missing"};
  EXPECT_THROW(drain(dir / "d.rcol", o), Error);
}

TEST(ColumnIO, CorruptChunkNamed) {
  testutil::TempDir dir;
  const auto path = dir / "d.rcol";
  write_dataset(random_columns(10, 4), path, 4, true);
  const auto h = read_header(path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(h.data_start + h.chunks[1].byte_offset));
    f.put(7);  // compression flag of the first column
  }
  EXPECT_NO_THROW(read_chunk(path, h, 0, std::vector<bool>(4, true)));
  try {
    drain(path, {});
    FAIL() << "expected error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("d.rcol"), std::string::npos) << msg;
    EXPECT_NE(msg.find("chunk 1"), std::string::npos) << msg;
  }
}

TEST(ColumnIO, CorruptDeflateStream) {
  testutil::TempDir dir;
  const auto path = dir / "d.rcol";
  write_dataset(random_columns(10, 4), path, 10, true);
  const auto h = read_header(path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(h.data_start + 17));
    f.put(static_cast<char>(0xff));
    f.put(static_cast<char>(0xff));
  }
  EXPECT_THROW(read_chunk(path, h, 0, std::vector<bool>(4, true)), Error);
}

TEST(ColumnIO, SchemaMismatchAcrossFiles) {
  testutil::TempDir dir;
  write_dataset(random_columns(5, 1), dir / "a.rcol", 4, true);
  write_dataset({{{"x", ColumnType::kInt64, true}, RaggedIds::from_rows({{1}})}}, dir / "b.rcol", 4, true);
  EXPECT_THROW(open_reader({dir / "a.rcol", dir / "b.rcol"}, {}), Error);
}

TEST(ColumnIOProperty, ShardDisjointCoverage) {
  testutil::TempDir dir;
  write_dataset(random_columns(997, 5), dir / "a.rcol", 13, true);
  write_dataset(random_columns(200, 6, 100000), dir / "b.rcol", 7, false);
  std::vector<int64_t> expect;
  for (int64_t r = 0; r < 997; ++r) expect.push_back(r);
  for (int64_t r = 0; r < 200; ++r) expect.push_back(r + 100000);
  for (int64_t shards : {1, 2, 3, 7}) {
    std::multiset<int64_t> seen;
    for (int64_t s = 0; s < shards; ++s) {
      ReaderOptions o;
      o.num_shards = shards;
      o.shard_index = s;
      o.batch_rows = 31;
      auto reader = open_reader({dir / "a.rcol", dir / "b.rcol"}, o);
      std::vector<int64_t> order;
      while (auto b = reader->next()) {
        for (int64_t v : std::get<RaggedIds>(b->columns.at("rid")).values()) order.push_back(v);
      }
      EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
      if (shards == 1) {
        EXPECT_EQ(order, expect);
      }
      seen.insert(order.begin(), order.end());
    }
    EXPECT_EQ(std::vector<int64_t>(seen.begin(), seen.end()), expect) << shards << " shards";
  }
}

TEST(ColumnIOProperty, PrefetchTransparent) {
  testutil::TempDir dir;
  write_dataset(random_columns(2000, 7), dir / "d.rcol", 33, true);
  for (int64_t shards : {1, 3}) {
    ReaderOptions a;
    a.prefetch_depth = 0;
    a.num_shards = shards;
    a.batch_rows = 50;
    ReaderOptions b = a;
    b.prefetch_depth = 8;
    const auto x = drain(dir / "d.rcol", a);
    const auto y = drain(dir / "d.rcol", b);
    ASSERT_EQ(x.size(), y.size());
    for (size_t i = 0; i < x.size(); ++i) {
      ASSERT_EQ(x[i].num_rows, y[i].num_rows);
      ASSERT_EQ(x[i].columns, y[i].columns);
    }
  }
}

TEST(ColumnIOProperty, EarlyDestructionWithPrefetch) {
  testutil::TempDir dir;
  write_dataset(random_columns(2000, 7), dir / "d.rcol", 10, true);
  ReaderOptions o;
  o.prefetch_depth = 8;
  o.batch_rows = 10;
  auto reader = open_reader({dir / "d.rcol"}, o);
  ASSERT_TRUE(reader->next().has_value());
  reader.reset();
  SUCCEED();
}

}  // namespace
}  // namespace embstack::columnio
