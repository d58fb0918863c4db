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
#include <string>
#include <vector>

#include "embstack/columnio.hpp"

namespace embstack::datagen {

/// Small counter-free generator helpers over a 64-bit state; results are
/// identical on every platform for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  /// Uniform in [0, n).
  int64_t below(int64_t n) noexcept {
    return static_cast<int64_t>((static_cast<unsigned __int128>(next()) * static_cast<uint64_t>(n)) >> 64);
  }
  /// Uniform in [0, 1).
  double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

/// One generated column, or `count` columns named name0..name{count-1}.
struct ColumnGen {
  std::string name;
  columnio::ColumnType dtype = columnio::ColumnType::kInt64;
  bool ragged = true;
  int64_t count = 1;
  int64_t mean_length = 4;
  /// When positive every row has exactly this many elements.
  int64_t fixed_length = 0;
  /// Probability of an empty row and of a long row.
  double empty_probability = 0.1;
  double long_probability = 0.01;
  int64_t long_length = 256;
  int64_t vocabulary = 10000;
};

/// Synthetic labeled samples. Each row draws a 0/1 label; with
/// probability `signal` every element is drawn from the half of the value
/// range associated with that label, otherwise from the whole range, so the
/// label is learnable from any feature.
struct DataSpec {
  int64_t rows = 4096;
  int64_t chunk_rows = 1024;
  bool compress = true;
  bool label = true;
  double signal = 0.8;
  std::vector<ColumnGen> columns;

  static DataSpec from_json(const std::string& text);
};

/// Labeled toy dataset: "user" (int64), "item_seq" (int64, long-tailed
/// lengths), "query" (bytes) and "price" (float32, one per row).
DataSpec toy_spec();

std::vector<columnio::Column> generate_columns(const DataSpec& spec, uint64_t seed);

void generate_dataset(const DataSpec& spec, uint64_t seed, const std::filesystem::path& path);

}  // namespace embstack::datagen
