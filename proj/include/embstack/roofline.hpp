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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "embstack/common.hpp"

namespace embstack::roofline {

/// Machine peaks. The JSON form is {name, peak_bandwidth_gbps, peak_tflops}
/// with bandwidth in 1e9 bytes/s and compute in 1e12 flop/s.
struct HardwareSpec {
  std::string name = "unnamed";
  double peak_bandwidth = 0;  // bytes / s
  double peak_flops = 0;      // flop / s

  void validate() const;
  static HardwareSpec from_json(const std::string& text);
  static HardwareSpec load(const std::filesystem::path& path);
};

/// Algorithmic-minimum traffic of one operator call: every input read once,
/// every output written once.
struct Traffic {
  int64_t bytes_read = 0;
  int64_t bytes_written = 0;
  int64_t flops = 0;
};

struct OpProfile {
  std::string name;
  int64_t bytes_read = 0;
  int64_t bytes_written = 0;
  int64_t flops = 0;
  double elapsed = 0;  // seconds
  int64_t dispatches = 1;

  int64_t bytes() const noexcept { return bytes_read + bytes_written; }
};

/// Achieved bandwidth over peak bandwidth.
double mbu(const OpProfile& p, const HardwareSpec& hw);
/// Achieved flop rate over peak flop rate.
double mfu(const OpProfile& p, const HardwareSpec& hw);

enum class Bound { kMemory, kCompute };

struct Classification {
  Bound bound;
  double arithmetic_intensity;  // flop / byte
  double bandwidth_intensity;   // byte / flop; infinite for zero-flop ops
  double ridge;                 // peak_flops / peak_bandwidth
};

/// Memory-bound iff arithmetic intensity < ridge; a tie is compute-bound.
Classification classify(const OpProfile& p, const HardwareSpec& hw);

std::string_view to_string(Bound b);

enum class ReportFormat { kCsv, kMarkdown };

/// One row per profile. CSV columns:
/// op,dispatches,bytes_read,bytes_written,flops,elapsed_s,mbu_pct,mfu_pct,bound
std::string emit_report(std::span<const OpProfile> profiles, const HardwareSpec& hw, ReportFormat format);

/// Append-only profile list that may be fed from several threads.
class ProfileLog {
 public:
  void add(OpProfile p) {
    std::lock_guard lock(mu_);
    profiles_.push_back(std::move(p));
  }
  std::vector<OpProfile> snapshot() const {
    std::lock_guard lock(mu_);
    return profiles_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<OpProfile> profiles_;
};

/// Runs `fn` `repeats` times and keeps the fastest wall time.
template <typename Fn>
OpProfile measure(std::string name, const Traffic& traffic, int64_t dispatches, int repeats, Fn&& fn) {
  OpProfile p{std::move(name), traffic.bytes_read, traffic.bytes_written, traffic.flops, 0.0, dispatches};
  double best = 0;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    if (r == 0 || s < best) best = s;
  }
  p.elapsed = std::max(best, 1e-9);
  return p;
}

/// Declared traffic of the instrumented operators.
namespace traffic {

Traffic bucketize(int64_t num_values, int64_t num_rows, int64_t num_edges);
Traffic mod(int64_t num_values, int64_t num_rows);
Traffic ids_partition(int64_t num_ids, int64_t num_unique);
Traffic segment_reduce(int64_t num_rows, int64_t dim, int64_t num_segments, bool mean);
Traffic segment_tile(int64_t kept_rows, int64_t dim, int64_t num_segments, int64_t k);
Traffic gather(int64_t num_rows, int64_t dim);
Traffic scatter(int64_t num_rows, int64_t dim);

}  // namespace traffic

}  // namespace embstack::roofline
