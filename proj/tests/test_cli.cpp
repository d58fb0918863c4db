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
#include <cstdlib>
#include <map>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "embstack/checkpoint.hpp"
#include "embstack/columnio.hpp"
#include "embstack/datagen.hpp"
#include "embstack/safetensors.hpp"
#include "embstack/trainer.hpp"
#include "test_util.hpp"

namespace embstack {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  const auto bytes = safetensors::read_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const testutil::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + EMBSTACK_CLI + "' " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

TEST(GenData, EmptyDatasetIsValid) {
  testutil::TempDir dir;
  auto spec = datagen::toy_spec();
  spec.rows = 0;
  datagen::generate_dataset(spec, 1, dir / "d.rcol");
  const auto h = columnio::read_header(dir / "d.rcol");
  EXPECT_TRUE(h.chunks.empty());
  EXPECT_EQ(h.schema.size(), spec.columns.size() + 1);
}

TEST(GenData, SameSeedByteIdentical) {
  testutil::TempDir dir;
  const auto spec = datagen::toy_spec();
  datagen::generate_dataset(spec, 5, dir / "a.rcol");
  datagen::generate_dataset(spec, 5, dir / "b.rcol");
  datagen::generate_dataset(spec, 6, dir / "c.rcol");
  EXPECT_EQ(slurp(dir / "a.rcol"), slurp(dir / "b.rcol"));
  EXPECT_NE(slurp(dir / "a.rcol"), slurp(dir / "c.rcol"));
}

TEST(GenData, SkewedLengths) {
  datagen::DataSpec spec;
  spec.rows = 5000;
  spec.label = false;
  datagen::ColumnGen c;
  c.name = "ids";
  c.empty_probability = 0.2;
  c.long_probability = 0.01;
  c.long_length = 1000;
  spec.columns = {c};
  const auto cols = datagen::generate_columns(spec, 3);
  const auto& ids = std::get<RaggedIds>(cols.at(0).data);
  int64_t empty = 0, longest = 0;
  for (int64_t r = 0; r < ids.num_rows(); ++r) {
    empty += ids.row_length(r) == 0;
    longest = std::max(longest, ids.row_length(r));
  }
  EXPECT_GT(empty, 500);
  EXPECT_GE(longest, 500);
}

TEST(GenData, BenchmarkShape) {
  datagen::DataSpec spec;
  spec.rows = 1000;
  spec.label = false;
  datagen::ColumnGen c;
  c.name = "f";
  c.dtype = columnio::ColumnType::kFloat32;
  c.count = 100;
  c.fixed_length = 10;
  spec.columns = {c};
  const auto cols = datagen::generate_columns(spec, 1);
  ASSERT_EQ(cols.size(), 100u);
  for (const auto& col : cols) EXPECT_EQ(std::get<RaggedFloats>(col.data).num_elements(), 10000);
}

TrainConfig small_config(int64_t shards) {
  auto cfg = TrainConfig::toy();
  cfg.seed = 7;
  cfg.num_shards = shards;
  return cfg;
}

TEST(TrainToy, ReproducibleAndShardInvariant) {
  testutil::TempDir a, b, c;
  const auto r1 = train_toy(small_config(1), a.path());
  train_toy(small_config(1), b.path());
  train_toy(small_config(4), c.path());
  const auto m1 = slurp(a / "metrics.csv");
  EXPECT_EQ(m1, slurp(b / "metrics.csv"));
  EXPECT_EQ(m1, slurp(c / "metrics.csv"));
  EXPECT_EQ(m1.substr(0, m1.find('\n')), "step,loss,unique_ids,imbalance,eval_loss,evicted");
  EXPECT_EQ(count_lines(m1), 201);
  ASSERT_EQ(r1.metrics.size(), 200u);
  EXPECT_LT(r1.metrics.back().loss, 0.8 * r1.metrics.front().loss);
  EXPECT_TRUE(fs::exists(a / "roofline.csv"));
  EXPECT_FALSE(inspect_checkpoint(a / "checkpoint").empty());
}

TEST(TrainToy, CheckpointMatchesTables) {
  testutil::TempDir dir;
  auto cfg = small_config(2);
  cfg.steps = 20;
  train_toy(cfg, dir.path());
  const auto m = read_manifest(dir / "checkpoint");
  ASSERT_FALSE(m.tables.empty());
  for (const auto& t : m.tables) EXPECT_EQ(t.global_step, 20);
  const auto loaded = load_sharded(dir / "checkpoint", 3);
  int64_t rows = 0;
  for (const auto& t : loaded) {
    for (const auto& s : t.shards) rows += s.size();
  }
  int64_t manifest_rows = 0;
  for (const auto& t : m.tables) {
    for (int64_t n : t.rows_per_file) manifest_rows += n;
  }
  EXPECT_EQ(rows, manifest_rows);
  EXPECT_GT(rows, 0);
}

TEST(TrainToy, TouchesEveryModule) {
  testutil::TempDir dir;
  auto cfg = small_config(2);
  cfg.steps = 5;
  reset_invocations();
  train_toy(cfg, dir.path());
  for (Module m : {Module::kRagged, Module::kFeatureEngine, Module::kEmbedding, Module::kSharding, Module::kOptimizer,
                   Module::kColumnIO, Module::kCheckpoint, Module::kRoofline}) {
    EXPECT_GT(invocations(m), 0u) << to_string(m);
  }
}

TEST(TrainToy, ConfigValidation) {
  auto cfg = TrainConfig::toy();
  cfg.num_shards = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(TrainConfig::from_json(R"({"steps": 3})"), Error);
  EXPECT_THROW(TrainConfig::from_json("{"), Error);
}

TEST(Cli, TrainToyRoundTrip) {
  testutil::TempDir dir;
  const auto r = run_cli(dir, "train-toy --steps 10 --shards 2 --seed 3 --out '" + (dir / "run").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(dir / "run" / "metrics.csv")), 11);
  const auto inspect = run_cli(dir, "ckpt-inspect '" + (dir / "run" / "checkpoint").string() + "'");
  ASSERT_EQ(inspect.code, 0) << inspect.err;
  EXPECT_EQ(inspect.out.rfind("version 1\n", 0), 0u);
  EXPECT_NE(inspect.out.find(".weight F32"), std::string::npos);
}

TEST(Cli, GenDataDeterministic) {
  testutil::TempDir dir;
  ASSERT_EQ(run_cli(dir, "gen-data --seed 9 --out '" + (dir / "a.rcol").string() + "'").code, 0);
  ASSERT_EQ(run_cli(dir, "gen-data --seed 9 --out '" + (dir / "b.rcol").string() + "'").code, 0);
  EXPECT_EQ(slurp(dir / "a.rcol"), slurp(dir / "b.rcol"));
  write_text(dir / "empty.json", R"({"rows": 0, "columns": [{"name": "x"}]})");
  ASSERT_EQ(run_cli(dir, "gen-data --config '" + (dir / "empty.json").string() + "' --out '" +
                             (dir / "e.rcol").string() + "'")
                .code,
            0);
  EXPECT_TRUE(columnio::read_header(dir / "e.rcol").chunks.empty());
}

TEST(Cli, BenchOpsReport) {
  testutil::TempDir dir;
  write_text(dir / "hw.json", R"({"name":"t","peak_bandwidth_gbps":50,"peak_tflops":1})");
  write_text(dir / "bench.json",
             R"({"columns":100,"values_per_column":100,"num_ids":2000,"id_vocabulary":500,"rows":2000,"dim":16,"repeats":1})");
  const auto r = run_cli(dir, "bench-ops --config '" + (dir / "bench.json").string() + "' --hw '" +
                                  (dir / "hw.json").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "op,dispatches,bytes_read,bytes_written,flops,elapsed_s,mbu_pct,mfu_pct,bound");
  std::map<std::string, std::string> dispatches;
  while (std::getline(lines, line)) {
    const auto a = line.find(',');
    dispatches[line.substr(0, a)] = line.substr(a + 1, line.find(',', a + 1) - a - 1);
  }
  for (const char* op : {"bucketize", "mod", "ids partition", "sequence tile", "reduce hard", "reduce easy", "gather",
                         "scatter"}) {
    EXPECT_TRUE(dispatches.contains(op)) << op;
  }
  EXPECT_EQ(dispatches["bucketize"], "1");
  EXPECT_EQ(dispatches["bucketize (unfused)"], "100");
  EXPECT_EQ(dispatches["mod"], "1");
  EXPECT_EQ(dispatches["mod (unfused)"], "100");
  EXPECT_EQ(dispatches.size(), 10u);
  const auto md = run_cli(dir, "bench-ops --format markdown --config '" + (dir / "bench.json").string() +
                                   "' --hw '" + (dir / "hw.json").string() + "'");
  ASSERT_EQ(md.code, 0) << md.err;
  EXPECT_NE(md.out.find("| op | dispatches |"), std::string::npos);
}

void expect_one_line_error(const Run& r, int code, const std::string& kind) {
  EXPECT_EQ(r.code, code) << r.err;
  EXPECT_EQ(count_lines(r.err), 1) << r.err;
  EXPECT_EQ(r.err.rfind("error: " + kind + ":", 0), 0u) << r.err;
}

TEST(Cli, Errors) {
  testutil::TempDir dir;
  expect_one_line_error(run_cli(dir, ""), 2, "usage");
  expect_one_line_error(run_cli(dir, "no-such-command"), 2, "usage");
  expect_one_line_error(run_cli(dir, "train-toy --steps notanumber"), 2, "usage");
  expect_one_line_error(run_cli(dir, "ckpt-inspect '" + (dir / "nothing").string() + "'"), 1, "io");
  expect_one_line_error(run_cli(dir, "bench-ops --format xml --hw x"), 1, "invalid_argument");
  expect_one_line_error(run_cli(dir, "gen-data"), 1, "invalid_argument");
  write_text(dir / "bad.json", "{not json");
  expect_one_line_error(run_cli(dir, "train-toy --config '" + (dir / "bad.json").string() + "'"), 1, "format");
  fs::create_directories(dir / "ck");
  write_text(dir / "ck" / "manifest.json",
             R"({"version":1,"files":["shard-00000-of-00001.safetensors"],"tables":[]})");
  write_text(dir / "ck" / "shard-00000-of-00001.safetensors", "abc");
  const auto corrupt = run_cli(dir, "ckpt-inspect '" + (dir / "ck").string() + "'");
  expect_one_line_error(corrupt, 1, "corrupt");
  EXPECT_NE(corrupt.err.find("shard-00000-of-00001.safetensors"), std::string::npos);
}

}  // namespace
}  // namespace embstack
