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
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "embstack/common.hpp"

namespace embstack {

/// Throws unless `offsets` is a valid CSR row-offset array covering
/// `num_elements` elements.
void validate_offsets(std::span<const int64_t> offsets, int64_t num_elements);

/// Converts per-row lengths to CSR offsets.
std::vector<int64_t> offsets_from_lengths(std::span<const int64_t> lengths);

enum class TruncateSide { kHead, kTail };

/// Variable-length batch in CSR layout: flat `values` plus `num_rows + 1`
/// row offsets. Each logical element is `dim` consecutive values, so an
/// embedding-row batch and an id batch share one representation.
template <typename T>
class Ragged {
 public:
  using value_type = T;

  Ragged() : row_offsets_{0} {}

  Ragged(std::vector<T> values, std::vector<int64_t> row_offsets, int64_t dim = 1)
      : values_(std::move(values)), row_offsets_(std::move(row_offsets)), dim_(dim) {
    require(dim_ >= 1, ErrorCode::kInvalidArgument, "ragged: dim must be >= 1");
    validate_offsets(row_offsets_, static_cast<int64_t>(values_.size()) / dim_);
    require(static_cast<int64_t>(values_.size()) == row_offsets_.back() * dim_,
            ErrorCode::kInvalidArgument, "ragged: values length != offsets.back() * dim");
    record_invocation(Module::kRagged);
  }

  /// Rows of scalar elements (dim 1).
  static Ragged from_rows(const std::vector<std::vector<T>>& rows) {
    std::vector<int64_t> offsets{0};
    offsets.reserve(rows.size() + 1);
    std::vector<T> values;
    for (const auto& r : rows) {
      values.insert(values.end(), r.begin(), r.end());
      offsets.push_back(static_cast<int64_t>(values.size()));
    }
    return Ragged(std::move(values), std::move(offsets), 1);
  }

  /// Rows of fixed-width elements; every element must have the same width.
  static Ragged from_element_rows(const std::vector<std::vector<std::vector<T>>>& rows) {
    int64_t dim = -1;
    std::vector<int64_t> offsets{0};
    std::vector<T> values;
    int64_t count = 0;
    for (const auto& r : rows) {
      for (const auto& e : r) {
        if (dim < 0) dim = static_cast<int64_t>(e.size());
        require(static_cast<int64_t>(e.size()) == dim, ErrorCode::kInvalidArgument,
                "ragged: mixed element widths");
        values.insert(values.end(), e.begin(), e.end());
        ++count;
      }
      offsets.push_back(count);
    }
    if (dim < 0) dim = 1;
    require(dim >= 1, ErrorCode::kInvalidArgument, "ragged: zero-width elements");
    return Ragged(std::move(values), std::move(offsets), dim);
  }

  /// Inverse of from_rows for dim 1. For wider elements each row is the
  /// flattened element values.
  std::vector<std::vector<T>> to_rows() const {
    std::vector<std::vector<T>> rows;
    rows.reserve(num_rows());
    for (int64_t i = 0; i < num_rows(); ++i) {
      auto r = row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    return rows;
  }

  int64_t num_rows() const noexcept { return static_cast<int64_t>(row_offsets_.size()) - 1; }
  int64_t num_elements() const noexcept { return row_offsets_.back(); }
  int64_t dim() const noexcept { return dim_; }
  int64_t row_length(int64_t i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

  std::span<const T> row(int64_t i) const {
    return {values_.data() + row_offsets_[i] * dim_,
            static_cast<size_t>(row_length(i) * dim_)};
  }

  const std::vector<T>& values() const noexcept { return values_; }
  const std::vector<int64_t>& row_offsets() const noexcept { return row_offsets_; }

  bool operator==(const Ragged&) const = default;

 private:
  std::vector<T> values_;
  std::vector<int64_t> row_offsets_;
  int64_t dim_ = 1;
};

using RaggedIds = Ragged<int64_t>;
using RaggedFloats = Ragged<float>;
using RaggedBytes = Ragged<std::string>;

/// Caps every row at `max_len` elements. kTail keeps the most recent
/// (last) elements, kHead keeps the first.
template <typename T>
Ragged<T> truncate(const Ragged<T>& rt, int64_t max_len, TruncateSide side = TruncateSide::kTail) {
  require(max_len >= 0, ErrorCode::kInvalidArgument, "truncate: max_len must be >= 0");
  const int64_t dim = rt.dim();
  std::vector<T> values;
  std::vector<int64_t> offsets{0};
  offsets.reserve(rt.num_rows() + 1);
  int64_t count = 0;
  for (int64_t i = 0; i < rt.num_rows(); ++i) {
    const int64_t len = rt.row_length(i);
    const int64_t keep = std::min(len, max_len);
    const int64_t first = side == TruncateSide::kTail ? len - keep : 0;
    auto r = rt.row(i);
    values.insert(values.end(), r.begin() + first * dim, r.begin() + (first + keep) * dim);
    count += keep;
    offsets.push_back(count);
  }
  return Ragged<T>(std::move(values), std::move(offsets), dim);
}

template <typename T>
struct PaddedBatch {
  /// num_rows x (max_len * dim); element j of row i occupies columns
  /// [j * dim, (j + 1) * dim).
  RowMatrix<T> dense;
  /// num_rows x max_len, 1 where a real element is present.
  RowMatrix<uint8_t> mask;
};

/// Dense padded view of a ragged batch. Rows longer than `max_len` are an
/// error; truncate first.
template <typename T>
PaddedBatch<T> pad_to_dense(const Ragged<T>& rt, int64_t max_len, T pad_value) {
  static_assert(std::is_arithmetic_v<T>, "pad_to_dense requires arithmetic elements");
  require(max_len >= 0, ErrorCode::kInvalidArgument, "pad_to_dense: max_len must be >= 0");
  const int64_t dim = rt.dim();
  PaddedBatch<T> out;
  out.dense = RowMatrix<T>::Constant(rt.num_rows(), max_len * dim, pad_value);
  out.mask = RowMatrix<uint8_t>::Zero(rt.num_rows(), max_len);
  for (int64_t i = 0; i < rt.num_rows(); ++i) {
    const int64_t len = rt.row_length(i);
    require(len <= max_len, ErrorCode::kInvalidArgument,
            "pad_to_dense: row " + std::to_string(i) + " has " + std::to_string(len) +
                " elements, exceeds max_len " + std::to_string(max_len));
    auto r = rt.row(i);
    for (int64_t k = 0; k < len * dim; ++k) out.dense(i, k) = r[k];
    out.mask.row(i).head(len).setOnes();
  }
  return out;
}

}  // namespace embstack
