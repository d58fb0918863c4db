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

#include "embstack/common.hpp"

#include <array>

namespace embstack {

namespace {
std::array<std::atomic<uint64_t>, static_cast<size_t>(Module::kCount_)> g_invocations{};
}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kFormat: return "format";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

std::string_view to_string(Module m) {
  switch (m) {
    case Module::kRagged: return "ragged";
    case Module::kFeatureEngine: return "feature_engine";
    case Module::kEmbedding: return "embedding_engine";
    case Module::kSharding: return "sharding";
    case Module::kOptimizer: return "optimizer";
    case Module::kColumnIO: return "columnio";
    case Module::kCheckpoint: return "checkpoint";
    case Module::kRoofline: return "roofline";
    case Module::kCount_: break;
  }
  return "unknown";
}

void record_invocation(Module m) noexcept {
  g_invocations[static_cast<size_t>(m)].fetch_add(1, std::memory_order_relaxed);
}

uint64_t invocations(Module m) noexcept {
  return g_invocations[static_cast<size_t>(m)].load(std::memory_order_relaxed);
}

void reset_invocations() noexcept {
  for (auto& c : g_invocations) c.store(0, std::memory_order_relaxed);
}

}  // namespace embstack
