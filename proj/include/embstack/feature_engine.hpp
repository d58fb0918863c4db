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

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "embstack/ragged.hpp"

namespace embstack {

/// Maps each byte-string to FNV-1a 64 of its raw bytes, reinterpreted as
/// signed. Shape preserved.
RaggedIds hash_feature(const RaggedBytes& strings);

/// FNV-1a over the 16-byte little-endian concatenation of `a` then `b`.
int64_t combine_ids(int64_t a, int64_t b) noexcept;

/// Strictly increasing bucket edges. Empty means a single bucket 0.
class Boundaries {
 public:
  Boundaries() = default;
  explicit Boundaries(std::vector<float> edges);

  const std::vector<float>& edges() const noexcept { return edges_; }
  size_t size() const noexcept { return edges_.size(); }

 private:
  std::vector<float> edges_;
};

/// bin(v) = number of edges e with v >= e. NaN inputs are rejected.
RaggedIds bucketize(const RaggedFloats& values, const Boundaries& boundaries);

/// Nonnegative remainder in [0, modulus).
RaggedIds mod_transform(const RaggedIds& ids, int64_t modulus);

/// Per-row Cartesian product of `a` and `b`, pairs combined with
/// combine_ids in a-major order.
RaggedIds cross(const RaggedIds& a, const RaggedIds& b);

enum class FusedKind { kBucketize, kMod };

/// A group of same-kind column transforms executed as one dispatch.
///
/// Construction compiles per-column parameters once: bucket edges are laid
/// out in Eytzinger order for a branch-free search, and moduli get a
/// precomputed Barrett reciprocal so the hot loop never issues a hardware divide.
/// The plan is meant to be built once and reused across batches.
class FusedPlan {
 public:
  static FusedPlan for_bucketize(std::vector<Boundaries> columns);
  static FusedPlan for_mod(std::vector<int64_t> moduli);

  FusedPlan(FusedPlan&& other) noexcept;
  FusedPlan& operator=(FusedPlan&&) = delete;
  FusedPlan(const FusedPlan&) = delete;

  FusedKind kind() const noexcept { return kind_; }
  size_t num_columns() const noexcept { return num_columns_; }
  uint64_t dispatch_count() const noexcept { return dispatches_.load(); }

  const std::vector<Boundaries>& boundaries() const noexcept { return boundaries_; }
  const std::vector<int64_t>& moduli() const noexcept { return moduli_; }

 private:
  friend std::vector<RaggedIds> fused_bucketize(const FusedPlan&, std::span<const RaggedFloats>);
  friend std::vector<RaggedIds> fused_mod(const FusedPlan&, std::span<const RaggedIds>);

  struct SearchTree {
    std::vector<float> keys;     // 1-based Eytzinger order, keys[0] unused
    std::vector<int64_t> rank;   // rank[k] = sorted position of keys[k]
    int64_t n = 0;
  };
  struct Reciprocal {
    uint64_t magic = 0;
    uint64_t divisor = 1;
  };

  FusedPlan(FusedKind kind, size_t n) : kind_(kind), num_columns_(n) {}

  FusedKind kind_;
  size_t num_columns_;
  std::vector<Boundaries> boundaries_;
  std::vector<SearchTree> trees_;
  std::vector<int64_t> moduli_;
  std::vector<Reciprocal> reciprocals_;
  mutable std::atomic<uint64_t> dispatches_{0};
};

/// Bit-identical to calling bucketize per column; records one dispatch.
std::vector<RaggedIds> fused_bucketize(const FusedPlan& plan, std::span<const RaggedFloats> columns);

/// Bit-identical to calling mod_transform per column; records one dispatch.
std::vector<RaggedIds> fused_mod(const FusedPlan& plan, std::span<const RaggedIds> columns);

}  // namespace embstack
