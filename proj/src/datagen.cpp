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

#include "embstack/datagen.hpp"

#include <json.hpp>

namespace embstack::datagen {

using json = nlohmann::json;
using columnio::ColumnType;

DataSpec DataSpec::from_json(const std::string& text) {
  DataSpec spec;
  try {
    const json j = json::parse(text);
    const json& d = j.contains("data") ? j.at("data") : j;
    spec.rows = d.value("rows", spec.rows);
    spec.chunk_rows = d.value("chunk_rows", spec.chunk_rows);
    spec.compress = d.value("compress", spec.compress);
    spec.label = d.value("label", spec.label);
    spec.signal = d.value("signal", spec.signal);
    for (const auto& c : d.value("columns", json::array())) {
      ColumnGen g;
      g.name = c.at("name").get<std::string>();
      g.dtype = columnio::parse_type(c.value("dtype", std::string("int64")));
      g.ragged = c.value("ragged", g.ragged);
      g.count = c.value("count", g.count);
      g.mean_length = c.value("mean_length", g.mean_length);
      g.fixed_length = c.value("fixed_length", g.fixed_length);
      g.empty_probability = c.value("empty_probability", g.empty_probability);
      g.long_probability = c.value("long_probability", g.long_probability);
      g.long_length = c.value("long_length", g.long_length);
      g.vocabulary = c.value("vocabulary", g.vocabulary);
      spec.columns.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("data spec: ") + e.what());
  }
  require(spec.rows >= 0 && spec.chunk_rows >= 1, ErrorCode::kInvalidArgument,
          "data spec: rows must be >= 0 and chunk_rows >= 1");
  return spec;
}

DataSpec toy_spec() {
  DataSpec spec;
  spec.rows = 4096;
  spec.chunk_rows = 512;
  ColumnGen user{.name = "user", .mean_length = 1, .empty_probability = 0.05, .long_probability = 0,
                 .vocabulary = 2000};
  ColumnGen items{.name = "item_seq", .mean_length = 8, .empty_probability = 0.1, .long_probability = 0.02,
                  .long_length = 200, .vocabulary = 20000};
  ColumnGen query{.name = "query", .dtype = ColumnType::kBytes, .mean_length = 3, .vocabulary = 500};
  ColumnGen price{.name = "price", .dtype = ColumnType::kFloat32, .ragged = false, .vocabulary = 100};
  spec.columns = {user, items, query, price};
  return spec;
}

namespace {

int64_t draw_length(Rng& rng, const ColumnGen& g) {
  if (!g.ragged) return 1;
  if (g.fixed_length > 0) return g.fixed_length;
  const double u = rng.unit();
  if (u < g.empty_probability) return 0;
  if (u < g.empty_probability + g.long_probability) return g.long_length / 2 + rng.below(g.long_length / 2 + 1);
  return 1 + rng.below(2 * std::max<int64_t>(g.mean_length, 1) - 1);
}

// Index in [0, vocabulary) leaning toward the label's half.
int64_t draw_index(Rng& rng, int64_t vocabulary, int64_t label, double signal) {
  const int64_t half = std::max<int64_t>(vocabulary / 2, 1);
  if (rng.unit() < signal) return label * half + rng.below(half);
  return rng.below(std::max<int64_t>(vocabulary, 1));
}

}  // namespace

std::vector<columnio::Column> generate_columns(const DataSpec& spec, uint64_t seed) {
  Rng rng(seed);
  std::vector<int64_t> labels(static_cast<size_t>(spec.rows));
  for (auto& y : labels) y = static_cast<int64_t>(rng.next() & 1);

  std::vector<columnio::Column> out;
  if (spec.label) {
    std::vector<int64_t> offsets(labels.size() + 1);
    for (size_t i = 0; i < offsets.size(); ++i) offsets[i] = static_cast<int64_t>(i);
    out.push_back({{"label", ColumnType::kInt64, false}, RaggedIds(labels, offsets)});
  }
  for (const auto& g : spec.columns) {
    for (int64_t k = 0; k < g.count; ++k) {
      const std::string name = g.count == 1 ? g.name : g.name + std::to_string(k);
      Rng col_rng(mix64(seed ^ fnv1a64(name)));
      std::vector<int64_t> offsets{0};
      std::vector<int64_t> index;
      for (int64_t r = 0; r < spec.rows; ++r) {
        const int64_t len = draw_length(col_rng, g);
        for (int64_t e = 0; e < len; ++e) index.push_back(draw_index(col_rng, g.vocabulary, labels[r], spec.signal));
        offsets.push_back(static_cast<int64_t>(index.size()));
      }
      columnio::ColumnData data;
      switch (g.dtype) {
        case ColumnType::kInt64:
          data = RaggedIds(std::move(index), std::move(offsets));
          break;
        case ColumnType::kFloat32: {
          std::vector<float> values(index.size());
          for (size_t i = 0; i < index.size(); ++i) {
            values[i] = static_cast<float>(index[i]) + static_cast<float>(col_rng.unit());
          }
          data = RaggedFloats(std::move(values), std::move(offsets));
          break;
        }
        case ColumnType::kBytes: {
          std::vector<std::string> values(index.size());
          for (size_t i = 0; i < index.size(); ++i) values[i] = "tok_" + std::to_string(index[i]);
          data = RaggedBytes(std::move(values), std::move(offsets));
          break;
        }
      }
      out.push_back({{name, g.dtype, g.ragged}, std::move(data)});
    }
  }
  return out;
}

void generate_dataset(const DataSpec& spec, uint64_t seed, const std::filesystem::path& path) {
  columnio::write_dataset(generate_columns(spec, seed), path, spec.chunk_rows, spec.compress);
}

}  // namespace embstack::datagen
