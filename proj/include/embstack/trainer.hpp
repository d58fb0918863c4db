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

#include "embstack/checkpoint.hpp"
#include "embstack/datagen.hpp"
#include "embstack/optimizer.hpp"
#include "embstack/roofline.hpp"
#include "embstack/sharding.hpp"

namespace embstack {

enum class FeatureKind { kIds, kHash, kBucketize, kCross };

/// One sparse feature of the toy model.
///   kIds:       int64 column, used as is
///   kHash:      bytes column, hashed to ids
///   kBucketize: float32 column, bucketized by `boundaries`
///   kCross:     cross of two earlier features `inputs`
/// A positive `modulus` folds the ids; a positive `max_length` truncates rows.
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kIds;
  std::string column;
  std::vector<std::string> inputs;
  int64_t dim = 8;
  int64_t modulus = 0;
  std::vector<float> boundaries;
  int64_t max_length = 0;
};

struct TrainConfig {
  uint64_t seed = 0;
  int64_t steps = 200;
  int64_t num_shards = 1;
  int64_t batch_rows = 128;
  int64_t prefetch_depth = 2;
  /// Held-out loss every this many steps; 0 disables.
  int64_t eval_every = 0;
  int64_t eval_rows = 512;
  /// Eviction pass every this many steps; 0 disables.
  int64_t evict_every = 0;
  int64_t evict_threshold = kNeverEvict;
  /// Shard count the imbalance metric is measured against. Fixed
  /// independently of num_shards so metrics are comparable across runs.
  int64_t balance_shards = 8;
  int64_t block_size = 1024;
  int64_t checkpoint_files = 2;
  ExchangeMode exchange = ExchangeMode::kThreaded;
  AdamConfig sparse_optimizer{.lr = 0.05};
  AdamConfig dense_optimizer{.lr = 0.05};
  std::string label_column = "label";
  std::vector<FeatureSpec> features;
  /// Synthetic data used when no dataset path is given.
  datagen::DataSpec data = datagen::toy_spec();
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> eval_dataset;
  roofline::HardwareSpec hardware{"generic-cpu", 50e9, 1e12};

  void validate() const;
  /// Five features over datagen::toy_spec(), merged into two logical tables.
  static TrainConfig toy();
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

struct StepMetrics {
  int64_t step = 0;
  double loss = 0;
  int64_t unique_ids = 0;
  double imbalance = 1.0;
  std::optional<double> eval_loss;
  int64_t evicted = 0;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  std::vector<roofline::OpProfile> profiles;
  CheckpointManifest checkpoint;
};

/// CSV with header step,loss,unique_ids,imbalance,eval_loss,evicted.
std::string metrics_csv(const std::vector<StepMetrics>& metrics);

/// Runs the toy training loop. Writes metrics.csv, roofline.csv and
/// checkpoint/ under `out_dir`; synthetic datasets are generated into
/// `out_dir` when the config names none.
TrainResult train_toy(const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace embstack
