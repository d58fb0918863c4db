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
#include <string>
#include <vector>

#include "embstack/roofline.hpp"

namespace embstack::bench {

/// Operator benchmark shapes. Defaults follow the canonical sizes: 100
/// feature columns of 10,000 values for the fused transforms, one million
/// ids or rows of width 16 for everything else.
struct BenchConfig {
  uint64_t seed = 0;
  int64_t columns = 100;
  int64_t values_per_column = 10000;
  int64_t mean_row_length = 10;
  int64_t bucket_edges = 64;
  int64_t num_ids = 1000000;
  int64_t id_vocabulary = 250000;
  int64_t num_shards = 8;
  int64_t rows = 1000000;
  int64_t dim = 16;
  int64_t hard_segment_length = 256;
  int64_t easy_segment_length = 2;
  int64_t tile_segment_length = 8;
  int64_t tile_k = 4;
  int repeats = 3;

  /// Missing keys keep their defaults.
  static BenchConfig from_json(const std::string& text);
};

/// Row labels of the canonical operator set, in report order.
const std::vector<std::string>& operator_names();

/// Runs every benchmark operator (fused transforms also unfused, labeled
/// "<op> (unfused)") and returns one profile per run.
std::vector<roofline::OpProfile> run_benchmarks(const BenchConfig& config);

}  // namespace embstack::bench
