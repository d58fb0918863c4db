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

#include "embstack/ragged.hpp"

namespace embstack {

void validate_offsets(std::span<const int64_t> offsets, int64_t num_elements) {
  require(!offsets.empty(), ErrorCode::kInvalidArgument, "offsets: must have at least one entry");
  require(offsets.front() == 0, ErrorCode::kInvalidArgument, "offsets: first entry must be 0");
  for (size_t i = 1; i < offsets.size(); ++i) {
    require(offsets[i] >= offsets[i - 1], ErrorCode::kInvalidArgument,
            "offsets: not nondecreasing at index " + std::to_string(i));
  }
  require(offsets.back() == num_elements, ErrorCode::kInvalidArgument,
          "offsets: last entry " + std::to_string(offsets.back()) + " != element count " +
              std::to_string(num_elements));
}

std::vector<int64_t> offsets_from_lengths(std::span<const int64_t> lengths) {
  std::vector<int64_t> offsets(lengths.size() + 1, 0);
  for (size_t i = 0; i < lengths.size(); ++i) {
    require(lengths[i] >= 0, ErrorCode::kInvalidArgument, "offsets: negative row length");
    offsets[i + 1] = offsets[i] + lengths[i];
  }
  return offsets;
}

}  // namespace embstack
