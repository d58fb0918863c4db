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

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "embstack/common.hpp"
#include "embstack/ragged.hpp"

namespace embstack {

enum class ReduceMode { kSum, kMean };

/// kSequential walks one segment at a time into a private accumulator and
/// suits long segments (many rows land on the same output). kScatter walks
/// rows and adds each into its segment's output row, which suits short,
/// sparse segments. kAuto picks by mean segment length.
enum class ReduceStrategy { kAuto, kSequential, kScatter };

/// Mean segment length at or above which kAuto selects kSequential.
inline constexpr double kSequentialReduceThreshold = 16.0;

inline ReduceStrategy resolve_strategy(ReduceStrategy requested, std::span<const int64_t> segments) {
  if (requested != ReduceStrategy::kAuto) return requested;
  const auto num_segments = static_cast<double>(segments.size() - 1);
  if (num_segments == 0) return ReduceStrategy::kSequential;
  const double mean_len = static_cast<double>(segments.back()) / num_segments;
  return mean_len >= kSequentialReduceThreshold ? ReduceStrategy::kSequential : ReduceStrategy::kScatter;
}

/// Sum or mean of the rows in each segment. Empty segments give a zero row.
template <typename Derived>
RowMatrix<typename Derived::Scalar> segment_reduce(const Eigen::MatrixBase<Derived>& rows,
                                                   std::span<const int64_t> segments,
                                                   ReduceMode mode = ReduceMode::kSum,
                                                   ReduceStrategy strategy = ReduceStrategy::kAuto) {
  using Scalar = typename Derived::Scalar;
  validate_offsets(segments, rows.rows());
  record_invocation(Module::kEmbedding);
  const auto num_segments = static_cast<Eigen::Index>(segments.size() - 1);
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(num_segments, rows.cols());

  if (resolve_strategy(strategy, segments) == ReduceStrategy::kSequential) {
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> acc(rows.cols());
    for (Eigen::Index s = 0; s < num_segments; ++s) {
      acc.setZero();
      for (int64_t r = segments[s]; r < segments[s + 1]; ++r) acc += rows.row(r);
      out.row(s) = acc;
    }
  } else {
    std::vector<int64_t> segment_of(static_cast<size_t>(rows.rows()));
    for (Eigen::Index s = 0; s < num_segments; ++s) {
      std::fill(segment_of.begin() + segments[s], segment_of.begin() + segments[s + 1], s);
    }
    for (Eigen::Index r = 0; r < rows.rows(); ++r) out.row(segment_of[r]) += rows.row(r);
  }

  if (mode == ReduceMode::kMean) {
    for (Eigen::Index s = 0; s < num_segments; ++s) {
      const int64_t len = segments[s + 1] - segments[s];
      if (len > 0) out.row(s) /= static_cast<Scalar>(len);
    }
  }
  return out;
}

/// Concatenates the first min(k, len) rows of each segment, padded with
/// `pad` to k * dim columns.
template <typename Derived>
RowMatrix<typename Derived::Scalar> segment_tile(const Eigen::MatrixBase<Derived>& rows,
                                                 std::span<const int64_t> segments, int64_t k,
                                                 typename Derived::Scalar pad) {
  using Scalar = typename Derived::Scalar;
  require(k >= 0, ErrorCode::kInvalidArgument, "segment_tile: k must be >= 0");
  validate_offsets(segments, rows.rows());
  record_invocation(Module::kEmbedding);
  const auto num_segments = static_cast<Eigen::Index>(segments.size() - 1);
  const Eigen::Index dim = rows.cols();
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Constant(num_segments, k * dim, pad);
  for (Eigen::Index s = 0; s < num_segments; ++s) {
    const int64_t take = std::min<int64_t>(k, segments[s + 1] - segments[s]);
    for (int64_t j = 0; j < take; ++j) out.row(s).segment(j * dim, dim) = rows.row(segments[s] + j);
  }
  return out;
}

}  // namespace embstack
