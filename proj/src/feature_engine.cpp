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

#include "embstack/feature_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>

namespace embstack {

namespace {

int64_t floor_mod(int64_t x, int64_t m) noexcept {
  int64_t r = x % m;
  return r < 0 ? r + m : r;
}

// Barrett reduction: with magic = floor((2^64 - 1) / d) the estimated
// quotient is low by at most one, so a single conditional subtract fixes it.
// Sign handling is branch-free; ids are often uniformly signed.
int64_t floor_mod_barrett(int64_t x, uint64_t magic, uint64_t d) noexcept {
  const uint64_t sign = static_cast<uint64_t>(x >> 63);
  const uint64_t mag = (static_cast<uint64_t>(x) ^ sign) - sign;
  const auto q = static_cast<uint64_t>((static_cast<unsigned __int128>(mag) * magic) >> 64);
  uint64_t r = mag - q * d;
  r -= d & (0 - static_cast<uint64_t>(r >= d));
  const uint64_t wrapped = (d - r) & (0 - static_cast<uint64_t>(r != 0));
  return static_cast<int64_t>((wrapped & sign) | (r & ~sign));
}

}  // namespace

RaggedIds hash_feature(const RaggedBytes& strings) {
  record_invocation(Module::kFeatureEngine);
  std::vector<int64_t> ids;
  ids.reserve(strings.values().size());
  for (const auto& s : strings.values()) ids.push_back(std::bit_cast<int64_t>(fnv1a64(s)));
  return RaggedIds(std::move(ids), strings.row_offsets(), strings.dim());
}

int64_t combine_ids(int64_t a, int64_t b) noexcept {
  char bytes[16];
  const uint64_t ua = std::bit_cast<uint64_t>(a);
  const uint64_t ub = std::bit_cast<uint64_t>(b);
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((ua >> (8 * i)) & 0xff);
    bytes[8 + i] = static_cast<char>((ub >> (8 * i)) & 0xff);
  }
  return std::bit_cast<int64_t>(fnv1a64(std::string_view(bytes, 16)));
}

Boundaries::Boundaries(std::vector<float> edges) : edges_(std::move(edges)) {
  for (size_t i = 0; i < edges_.size(); ++i) {
    require(!std::isnan(edges_[i]), ErrorCode::kInvalidArgument, "boundaries: NaN edge");
    if (i > 0) {
      require(edges_[i] > edges_[i - 1], ErrorCode::kInvalidArgument,
              "boundaries: edges must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

RaggedIds bucketize(const RaggedFloats& values, const Boundaries& boundaries) {
  record_invocation(Module::kFeatureEngine);
  const auto& edges = boundaries.edges();
  std::vector<int64_t> bins(values.values().size());
  for (size_t i = 0; i < bins.size(); ++i) {
    const float v = values.values()[i];
    require(!std::isnan(v), ErrorCode::kInvalidArgument,
            "bucketize: NaN input at element " + std::to_string(i));
    bins[i] = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
  }
  return RaggedIds(std::move(bins), values.row_offsets(), values.dim());
}

RaggedIds mod_transform(const RaggedIds& ids, int64_t modulus) {
  require(modulus > 0, ErrorCode::kInvalidArgument, "mod: modulus must be positive");
  record_invocation(Module::kFeatureEngine);
  std::vector<int64_t> out(ids.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = floor_mod(ids.values()[i], modulus);
  return RaggedIds(std::move(out), ids.row_offsets(), ids.dim());
}

RaggedIds cross(const RaggedIds& a, const RaggedIds& b) {
  require(a.num_rows() == b.num_rows(), ErrorCode::kInvalidArgument,
          "cross: row count mismatch (" + std::to_string(a.num_rows()) + " vs " +
              std::to_string(b.num_rows()) + ")");
  require(a.dim() == 1 && b.dim() == 1, ErrorCode::kInvalidArgument, "cross: ids must be scalar");
  record_invocation(Module::kFeatureEngine);
  std::vector<int64_t> out;
  std::vector<int64_t> offsets{0};
  offsets.reserve(a.num_rows() + 1);
  for (int64_t i = 0; i < a.num_rows(); ++i) {
    for (int64_t x : a.row(i)) {
      for (int64_t y : b.row(i)) out.push_back(combine_ids(x, y));
    }
    offsets.push_back(static_cast<int64_t>(out.size()));
  }
  return RaggedIds(std::move(out), std::move(offsets));
}

FusedPlan::FusedPlan(FusedPlan&& other) noexcept
    : kind_(other.kind_),
      num_columns_(other.num_columns_),
      boundaries_(std::move(other.boundaries_)),
      trees_(std::move(other.trees_)),
      moduli_(std::move(other.moduli_)),
      reciprocals_(std::move(other.reciprocals_)),
      dispatches_(other.dispatches_.load()) {}

FusedPlan FusedPlan::for_bucketize(std::vector<Boundaries> columns) {
  FusedPlan plan(FusedKind::kBucketize, columns.size());
  plan.trees_.reserve(columns.size());
  for (const auto& b : columns) {
    SearchTree tree;
    tree.n = static_cast<int64_t>(b.size());
    tree.keys.assign(b.size() + 1, 0.0f);
    tree.rank.assign(b.size() + 1, 0);
    int64_t next = 0;
    std::function<void(int64_t)> fill = [&](int64_t k) {
      if (k > tree.n) return;
      fill(2 * k);
      tree.keys[k] = b.edges()[next];
      tree.rank[k] = next++;
      fill(2 * k + 1);
    };
    fill(1);
    plan.trees_.push_back(std::move(tree));
  }
  plan.boundaries_ = std::move(columns);
  return plan;
}

FusedPlan FusedPlan::for_mod(std::vector<int64_t> moduli) {
  FusedPlan plan(FusedKind::kMod, moduli.size());
  for (int64_t m : moduli) {
    require(m > 0, ErrorCode::kInvalidArgument, "fused mod: modulus must be positive");
    Reciprocal r;
    r.divisor = static_cast<uint64_t>(m);
    r.magic = ~uint64_t{0} / r.divisor;
    plan.reciprocals_.push_back(r);
  }
  plan.moduli_ = std::move(moduli);
  return plan;
}

std::vector<RaggedIds> fused_bucketize(const FusedPlan& plan, std::span<const RaggedFloats> columns) {
  require(plan.kind() == FusedKind::kBucketize, ErrorCode::kInvalidArgument,
          "fused_bucketize: plan is not a bucketize plan");
  require(columns.size() == plan.num_columns(), ErrorCode::kInvalidArgument,
          "fused_bucketize: plan has " + std::to_string(plan.num_columns()) + " columns, got " +
              std::to_string(columns.size()));
  plan.dispatches_.fetch_add(1);
  record_invocation(Module::kFeatureEngine);

  std::vector<RaggedIds> out;
  out.reserve(columns.size());
  for (size_t c = 0; c < columns.size(); ++c) {
    const auto& t = plan.trees_[c];
    const auto& values = columns[c].values();
    std::vector<int64_t> bins(values.size());
    for (size_t e = 0; e < values.size(); ++e) {
      const float v = values[e];
      if (std::isnan(v)) fail(ErrorCode::kInvalidArgument, "bucketize: NaN input in column " + std::to_string(c));
      uint64_t k = 1;
      while (static_cast<int64_t>(k) <= t.n) k = 2 * k + (t.keys[k] <= v);
      k >>= std::countr_zero(~k) + 1;
      bins[e] = k == 0 ? t.n : t.rank[k];
    }
    out.emplace_back(std::move(bins), columns[c].row_offsets(), columns[c].dim());
  }
  return out;
}

std::vector<RaggedIds> fused_mod(const FusedPlan& plan, std::span<const RaggedIds> columns) {
  require(plan.kind() == FusedKind::kMod, ErrorCode::kInvalidArgument,
          "fused_mod: plan is not a mod plan");
  require(columns.size() == plan.num_columns(), ErrorCode::kInvalidArgument,
          "fused_mod: plan has " + std::to_string(plan.num_columns()) + " columns, got " +
              std::to_string(columns.size()));
  plan.dispatches_.fetch_add(1);
  record_invocation(Module::kFeatureEngine);

  std::vector<RaggedIds> out;
  out.reserve(columns.size());
  for (size_t c = 0; c < columns.size(); ++c) {
    const auto r = plan.reciprocals_[c];
    const auto& ids = columns[c].values();
    std::vector<int64_t> rem(ids.size());
    for (size_t e = 0; e < ids.size(); ++e) {
      rem[e] = floor_mod_barrett(ids[e], r.magic, r.divisor);
    }
    out.emplace_back(std::move(rem), columns[c].row_offsets(), columns[c].dim());
  }
  return out;
}

}  // namespace embstack
