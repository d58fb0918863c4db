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

#include "embstack/bench.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <json.hpp>

#include "embstack/embedding.hpp"
#include "embstack/feature_engine.hpp"
#include "embstack/segment.hpp"
#include "embstack/sharding.hpp"

namespace embstack::bench {

BenchConfig BenchConfig::from_json(const std::string& text) {
  BenchConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.seed = j.value("seed", c.seed);
    c.columns = j.value("columns", c.columns);
    c.values_per_column = j.value("values_per_column", c.values_per_column);
    c.mean_row_length = j.value("mean_row_length", c.mean_row_length);
    c.bucket_edges = j.value("bucket_edges", c.bucket_edges);
    c.num_ids = j.value("num_ids", c.num_ids);
    c.id_vocabulary = j.value("id_vocabulary", c.id_vocabulary);
    c.num_shards = j.value("num_shards", c.num_shards);
    c.rows = j.value("rows", c.rows);
    c.dim = j.value("dim", c.dim);
    c.hard_segment_length = j.value("hard_segment_length", c.hard_segment_length);
    c.easy_segment_length = j.value("easy_segment_length", c.easy_segment_length);
    c.tile_segment_length = j.value("tile_segment_length", c.tile_segment_length);
    c.tile_k = j.value("tile_k", c.tile_k);
    c.repeats = j.value("repeats", c.repeats);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("bench config: ") + e.what());
  }
  return c;
}

namespace {

std::vector<int64_t> random_lengths(std::mt19937_64& rng, int64_t total, int64_t mean_len) {
  // Uniform in [0, 2 * mean], last row absorbs the remainder.
  std::uniform_int_distribution<int64_t> len(0, 2 * mean_len);
  std::vector<int64_t> lengths;
  int64_t used = 0;
  while (used < total) {
    const int64_t l = std::min(len(rng), total - used);
    lengths.push_back(l);
    used += l;
  }
  return lengths;
}

std::vector<int64_t> even_offsets(int64_t total, int64_t segment_len) {
  std::vector<int64_t> offsets{0};
  for (int64_t at = 0; at < total;) {
    at = std::min(total, at + segment_len);
    offsets.push_back(at);
  }
  return offsets;
}

template <typename T>
void keep(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

}  // namespace

const std::vector<std::string>& operator_names() {
  static const std::vector<std::string> names = {"bucketize",   "mod",         "ids partition", "sequence tile",
                                                 "reduce hard", "reduce easy", "gather",        "scatter"};
  return names;
}

std::vector<roofline::OpProfile> run_benchmarks(const BenchConfig& cfg) {
  namespace tr = roofline::traffic;
  require(cfg.columns >= 1 && cfg.values_per_column >= 1 && cfg.mean_row_length >= 1 && cfg.bucket_edges >= 1 &&
              cfg.num_ids >= 1 && cfg.id_vocabulary >= 1 && cfg.num_shards >= 1 && cfg.rows >= 1 && cfg.dim >= 1 &&
              cfg.hard_segment_length >= 1 && cfg.easy_segment_length >= 1 && cfg.tile_segment_length >= 1 &&
              cfg.tile_k >= 0,
          ErrorCode::kInvalidArgument, "bench config: sizes must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::vector<roofline::OpProfile> out;

  // Fused transforms over many small columns.
  std::vector<RaggedFloats> float_columns;
  std::vector<RaggedIds> id_columns;
  std::vector<Boundaries> boundaries;
  std::vector<int64_t> moduli;
  int64_t total_values = 0, total_rows = 0;
  {
    std::uniform_real_distribution<float> value(0.0f, 1000.0f);
    std::uniform_int_distribution<int64_t> id;
    std::uniform_int_distribution<int64_t> modulus(1000, 1000000);
    for (int64_t c = 0; c < cfg.columns; ++c) {
      const auto lengths = random_lengths(rng, cfg.values_per_column, cfg.mean_row_length);
      const auto offsets = offsets_from_lengths(lengths);
      std::vector<float> fv(cfg.values_per_column);
      std::vector<int64_t> iv(cfg.values_per_column);
      for (auto& v : fv) v = value(rng);
      for (auto& v : iv) v = id(rng);
      float_columns.emplace_back(std::move(fv), offsets);
      id_columns.emplace_back(std::move(iv), offsets);
      std::vector<float> edges(cfg.bucket_edges);
      for (int64_t e = 0; e < cfg.bucket_edges; ++e) {
        edges[e] = 1000.0f * static_cast<float>(e + 1) / static_cast<float>(cfg.bucket_edges + 1) +
                   static_cast<float>(c) * 1e-3f;
      }
      boundaries.emplace_back(std::move(edges));
      moduli.push_back(modulus(rng));
      total_values += cfg.values_per_column;
      total_rows += static_cast<int64_t>(lengths.size());
    }
  }
  const auto bucket_plan = FusedPlan::for_bucketize(boundaries);
  const auto mod_plan = FusedPlan::for_mod(moduli);
  const auto cols = cfg.columns;

  out.push_back(roofline::measure("bucketize", tr::bucketize(total_values, total_rows, cols * cfg.bucket_edges), 1,
                                  cfg.repeats, [&] { keep(fused_bucketize(bucket_plan, float_columns)); }));
  out.push_back(roofline::measure(
      "bucketize (unfused)", tr::bucketize(total_values, total_rows, cols * cfg.bucket_edges), cols, cfg.repeats, [&] {
        std::vector<RaggedIds> outs;
        outs.reserve(cols);
        for (int64_t c = 0; c < cols; ++c) outs.push_back(bucketize(float_columns[c], boundaries[c]));
        keep(outs);
      }));
  out.push_back(roofline::measure("mod", tr::mod(total_values, total_rows), 1, cfg.repeats,
                                  [&] { keep(fused_mod(mod_plan, id_columns)); }));
  out.push_back(roofline::measure("mod (unfused)", tr::mod(total_values, total_rows), cols, cfg.repeats, [&] {
    std::vector<RaggedIds> outs;
    outs.reserve(cols);
    for (int64_t c = 0; c < cols; ++c) outs.push_back(mod_transform(id_columns[c], moduli[c]));
    keep(outs);
  }));

  // Dedup + partition.
  {
    std::uniform_int_distribution<int64_t> pick(0, cfg.id_vocabulary - 1);
    std::vector<int64_t> ids(cfg.num_ids);
    for (auto& v : ids) v = static_cast<int64_t>(mix64(static_cast<uint64_t>(pick(rng))));
    const ShardPlan plan(cfg.num_shards);
    const int64_t unique = unique_partition(ids, plan).num_unique();
    out.push_back(roofline::measure("ids partition", tr::ids_partition(cfg.num_ids, unique), 1, cfg.repeats,
                                    [&] { keep(unique_partition(ids, plan)); }));
  }

  // Pooling over rows x dim.
  MatrixF rows(cfg.rows, cfg.dim);
  {
    std::uniform_real_distribution<float> value(-1.0f, 1.0f);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = value(rng);
  }
  {
    const auto lengths = random_lengths(rng, cfg.rows, cfg.tile_segment_length);
    const auto seg = offsets_from_lengths(lengths);
    int64_t kept = 0;
    for (int64_t l : lengths) kept += std::min(l, cfg.tile_k);
    const auto num_segments = static_cast<int64_t>(lengths.size());
    out.push_back(roofline::measure("sequence tile", tr::segment_tile(kept, cfg.dim, num_segments, cfg.tile_k), 1,
                                    cfg.repeats, [&] { keep(segment_tile(rows, seg, cfg.tile_k, 0.0f)); }));
  }
  for (const auto& [name, len] : {std::pair<std::string, int64_t>{"reduce hard", cfg.hard_segment_length},
                                  std::pair<std::string, int64_t>{"reduce easy", cfg.easy_segment_length}}) {
    const auto seg = even_offsets(cfg.rows, len);
    const auto num_segments = static_cast<int64_t>(seg.size()) - 1;
    out.push_back(roofline::measure(name, tr::segment_reduce(cfg.rows, cfg.dim, num_segments, false), 1, cfg.repeats,
                                    [&] { keep(segment_reduce(rows, seg, ReduceMode::kSum)); }));
  }

  // Embedding row access.
  {
    TableOptions opts;
    opts.dim = cfg.dim;
    opts.seed = cfg.seed;
    opts.block_size = 65536;
    EmbeddingTable table("bench", opts);
    std::vector<int64_t> ids(cfg.rows);
    std::iota(ids.begin(), ids.end(), 0);
    auto slots = lookup_or_insert(table, ids, 1);
    std::vector<int64_t> reads(cfg.rows);
    std::uniform_int_distribution<size_t> pick(0, slots.size() - 1);
    for (auto& r : reads) r = slots[pick(rng)];
    out.push_back(roofline::measure("gather", tr::gather(cfg.rows, cfg.dim), 1, cfg.repeats,
                                    [&] { keep(gather(table, reads)); }));
    std::shuffle(slots.begin(), slots.end(), rng);
    out.push_back(roofline::measure("scatter", tr::scatter(cfg.rows, cfg.dim), 1, cfg.repeats,
                                    [&] { scatter_update(table, slots, rows); }));
  }
  return out;
}

}  // namespace embstack::bench
