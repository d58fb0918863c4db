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

#include "embstack/roofline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "embstack/safetensors.hpp"

namespace embstack::roofline {

using json = nlohmann::json;

void HardwareSpec::validate() const {
  require(peak_bandwidth > 0 && peak_flops > 0, ErrorCode::kInvalidArgument,
          "hardware spec " + name + ": peaks must be > 0");
}

HardwareSpec HardwareSpec::from_json(const std::string& text) {
  HardwareSpec hw;
  try {
    const json j = json::parse(text);
    hw.name = j.value("name", std::string("unnamed"));
    hw.peak_bandwidth = j.at("peak_bandwidth_gbps").get<double>() * 1e9;
    hw.peak_flops = j.at("peak_tflops").get<double>() * 1e12;
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("hardware spec: ") + e.what());
  }
  hw.validate();
  return hw;
}

HardwareSpec HardwareSpec::load(const std::filesystem::path& path) {
  const auto bytes = safetensors::read_bytes(path);
  return from_json(std::string(bytes.begin(), bytes.end()));
}

double mbu(const OpProfile& p, const HardwareSpec& hw) {
  record_invocation(Module::kRoofline);
  hw.validate();
  require(p.elapsed > 0, ErrorCode::kInvalidArgument, "mbu: elapsed must be > 0");
  return (static_cast<double>(p.bytes()) / p.elapsed) / hw.peak_bandwidth;
}

double mfu(const OpProfile& p, const HardwareSpec& hw) {
  record_invocation(Module::kRoofline);
  hw.validate();
  require(p.elapsed > 0, ErrorCode::kInvalidArgument, "mfu: elapsed must be > 0");
  return (static_cast<double>(p.flops) / p.elapsed) / hw.peak_flops;
}

Classification classify(const OpProfile& p, const HardwareSpec& hw) {
  record_invocation(Module::kRoofline);
  hw.validate();
  require(p.bytes() > 0, ErrorCode::kInvalidArgument,
          "classify: " + p.name + " moves zero bytes, arithmetic intensity undefined");
  Classification c{};
  c.arithmetic_intensity = static_cast<double>(p.flops) / static_cast<double>(p.bytes());
  c.bandwidth_intensity = p.flops == 0 ? std::numeric_limits<double>::infinity()
                                       : static_cast<double>(p.bytes()) / static_cast<double>(p.flops);
  c.ridge = hw.peak_flops / hw.peak_bandwidth;
  c.bound = c.arithmetic_intensity < c.ridge ? Bound::kMemory : Bound::kCompute;
  return c;
}

std::string_view to_string(Bound b) { return b == Bound::kMemory ? "memory" : "compute"; }

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string emit_report(std::span<const OpProfile> profiles, const HardwareSpec& hw, ReportFormat format) {
  record_invocation(Module::kRoofline);
  std::ostringstream os;
  if (format == ReportFormat::kCsv) {
    os << "op,dispatches,bytes_read,bytes_written,flops,elapsed_s,mbu_pct,mfu_pct,bound\n";
  } else {
    os << "Byte and flop counts are algorithmic minimums (each input read once, each output written once); "
       << "peaks from hardware spec \"" << hw.name << "\".\n\n"
       << "| op | dispatches | bytes | elapsed (s) | MBU % | MFU % | bound |\n"
       << "|---|---:|---:|---:|---:|---:|---|\n";
  }
  for (const auto& p : profiles) {
    const std::string bound = p.bytes() > 0 ? std::string(to_string(classify(p, hw).bound)) : "undefined";
    const std::string mbu_pct = fixed2(100.0 * mbu(p, hw));
    const std::string mfu_pct = fixed2(100.0 * mfu(p, hw));
    if (format == ReportFormat::kCsv) {
      os << p.name << ',' << p.dispatches << ',' << p.bytes_read << ',' << p.bytes_written << ',' << p.flops << ','
         << general(p.elapsed) << ',' << mbu_pct << ',' << mfu_pct << ',' << bound << '\n';
    } else {
      os << "| " << p.name << " | " << p.dispatches << " | " << p.bytes() << " | " << general(p.elapsed) << " | "
         << mbu_pct << " | " << mfu_pct << " | " << bound << " |\n";
    }
  }
  return os.str();
}

namespace traffic {

namespace {
constexpr int64_t kF32 = 4;
constexpr int64_t kI64 = 8;
}  // namespace

Traffic bucketize(int64_t num_values, int64_t num_rows, int64_t num_edges) {
  const int64_t offsets = (num_rows + 1) * kI64;
  const auto depth = static_cast<int64_t>(std::ceil(std::log2(static_cast<double>(num_edges) + 1.0)));
  return {num_values * kF32 + offsets + num_edges * kF32, num_values * kI64 + offsets, num_values * depth};
}

Traffic mod(int64_t num_values, int64_t num_rows) {
  const int64_t offsets = (num_rows + 1) * kI64;
  return {num_values * kI64 + offsets, num_values * kI64 + offsets, num_values};
}

Traffic ids_partition(int64_t num_ids, int64_t num_unique) {
  // Reads ids; writes per-shard uniques, their first positions and a
  // (shard, index) pair per input.
  return {num_ids * kI64, num_unique * 2 * kI64 + num_ids * 2 * kI64, num_ids};
}

Traffic segment_reduce(int64_t num_rows, int64_t dim, int64_t num_segments, bool mean) {
  return {num_rows * dim * kF32 + (num_segments + 1) * kI64, num_segments * dim * kF32,
          num_rows * dim + (mean ? num_segments * dim : 0)};
}

Traffic segment_tile(int64_t kept_rows, int64_t dim, int64_t num_segments, int64_t k) {
  return {kept_rows * dim * kF32 + (num_segments + 1) * kI64, num_segments * k * dim * kF32, 0};
}

Traffic gather(int64_t num_rows, int64_t dim) {
  return {num_rows * kI64 + num_rows * dim * kF32, num_rows * dim * kF32, 0};
}

Traffic scatter(int64_t num_rows, int64_t dim) {
  return {num_rows * kI64 + num_rows * dim * kF32, num_rows * dim * kF32, 0};
}

}  // namespace traffic

}  // namespace embstack::roofline
