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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "embstack/bench.hpp"
#include "embstack/roofline.hpp"

namespace embstack::roofline {
namespace {

HardwareSpec hw(double bandwidth, double flops) {
  HardwareSpec h;
  h.name = "test";
  h.peak_bandwidth = bandwidth;
  h.peak_flops = flops;
  return h;
}

OpProfile profile(int64_t read, int64_t written, int64_t flops, double elapsed) {
  return {"op", read, written, flops, elapsed, 1};
}

TEST(Roofline, MbuExamples) {
  EXPECT_DOUBLE_EQ(mbu(profile(100'000'000'000, 0, 0, 1.0), hw(1000e9, 1e12)), 0.10);
  EXPECT_DOUBLE_EQ(mbu(profile(60'000'000'000, 40'000'000'000, 0, 1.0), hw(1000e9, 1e12)), 0.10);
  EXPECT_EQ(mbu(profile(0, 0, 5, 1.0), hw(1e9, 1e12)), 0.0);
  EXPECT_THROW(mbu(profile(1, 0, 0, 0.0), hw(1e9, 1e12)), Error);
  EXPECT_THROW(mbu(profile(1, 0, 0, 1.0), hw(0, 1e12)), Error);
}

TEST(Roofline, MfuExamples) {
  EXPECT_DOUBLE_EQ(mfu(profile(0, 0, 50'000'000'000'000, 1.0), hw(1e9, 100e12)), 0.5);
  EXPECT_EQ(mfu(profile(1000, 1000, 0, 1.0), hw(1e9, 1e12)), 0.0);
  const auto p = profile(1000, 0, 1000, 1e-3);
  const double before = mbu(p, hw(1e9, 1e12));
  EXPECT_DOUBLE_EQ(mbu(p, hw(1e9, 2e12)), before);
}

TEST(Roofline, Metamorphic) {
  const auto h = hw(7e9, 3e12);
  const auto p = profile(12345, 678, 910, 0.25);
  EXPECT_DOUBLE_EQ(mbu(profile(2 * 12345, 2 * 678, 910, 0.25), h), 2 * mbu(p, h));
  EXPECT_DOUBLE_EQ(mbu(profile(12345, 678, 910, 0.5), h), mbu(p, h) / 2);
  EXPECT_DOUBLE_EQ(mfu(profile(12345, 678, 2 * 910, 0.25), h), 2 * mfu(p, h));
}

TEST(Roofline, ClassifyExamples) {
  const auto h = hw(10, 100);
  const auto mem = classify(profile(10, 0, 5, 1), h);
  EXPECT_DOUBLE_EQ(mem.arithmetic_intensity, 0.5);
  EXPECT_DOUBLE_EQ(mem.ridge, 10);
  EXPECT_DOUBLE_EQ(mem.bandwidth_intensity, 2);
  EXPECT_EQ(mem.bound, Bound::kMemory);
  EXPECT_EQ(classify(profile(10, 0, 100, 1), h).bound, Bound::kCompute);  // tie
  EXPECT_EQ(classify(profile(10, 0, 99, 1), h).bound, Bound::kMemory);
  EXPECT_TRUE(std::isinf(classify(profile(10, 0, 0, 1), h).bandwidth_intensity));
  EXPECT_THROW(classify(profile(0, 0, 10, 1), h), Error);
}

TEST(Roofline, ClassifyScaleInvariant) {
  for (int64_t flops : {1, 37, 100, 101, 5000}) {
    const auto base = classify(profile(60, 40, flops, 1), hw(10, 100)).bound;
    for (int64_t k : {2, 3, 1000}) {
      EXPECT_EQ(classify(profile(60 * k, 40 * k, flops * k, 1), hw(10.0 * k, 100.0 * k)).bound, base);
    }
  }
}

TEST(Roofline, HardwareJson) {
  const auto h = HardwareSpec::from_json(R"({"name":"x","peak_bandwidth_gbps":50,"peak_tflops":1.5})");
  EXPECT_EQ(h.name, "x");
  EXPECT_DOUBLE_EQ(h.peak_bandwidth, 50e9);
  EXPECT_DOUBLE_EQ(h.peak_flops, 1.5e12);
  EXPECT_THROW(HardwareSpec::from_json(R"({"peak_bandwidth_gbps":0,"peak_tflops":1})"), Error);
  EXPECT_THROW(HardwareSpec::from_json(R"({"peak_tflops":1})"), Error);
  EXPECT_THROW(HardwareSpec::from_json("not json"), Error);
}

TEST(Report, EmptyIsHeaderOnly) {
  EXPECT_EQ(emit_report({}, hw(1e9, 1e12), ReportFormat::kCsv),
            "op,dispatches,bytes_read,bytes_written,flops,elapsed_s,mbu_pct,mfu_pct,bound\n");
  const auto md = emit_report({}, hw(1e9, 1e12), ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| op | dispatches |"), std::string::npos);
  EXPECT_EQ(md.back(), '\n');
}

TEST(Report, CsvTenPercentRow) {
  const std::vector<OpProfile> ps = {{"gather", 60'000'000'000, 40'000'000'000, 0, 1.0, 1}};
  const auto csv = emit_report(ps, hw(1000e9, 1e12), ReportFormat::kCsv);
  EXPECT_EQ(csv,
            "op,dispatches,bytes_read,bytes_written,flops,elapsed_s,mbu_pct,mfu_pct,bound\n"
            "gather,1,60000000000,40000000000,0,1,10.00,0.00,memory\n");
  const auto md = emit_report(ps, hw(1000e9, 1e12), ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| gather | 1 | 100000000000 | 1 | 10.00 | 0.00 | memory |"), std::string::npos) << md;
}

TEST(Traffic, HandCountsOnTinyInputs) {
  // segment_reduce: 3 rows of dim 2 into 2 segments.
  const auto sr = traffic::segment_reduce(3, 2, 2, false);
  EXPECT_EQ(sr.bytes_read, 3 * 2 * 4 + 3 * 8);
  EXPECT_EQ(sr.bytes_written, 2 * 2 * 4);
  EXPECT_EQ(sr.flops, 6);
  EXPECT_EQ(traffic::segment_reduce(3, 2, 2, true).flops, 6 + 4);
  const auto g = traffic::gather(5, 4);
  EXPECT_EQ(g.bytes_read, 5 * 8 + 5 * 4 * 4);
  EXPECT_EQ(g.bytes_written, 5 * 4 * 4);
  const auto s = traffic::scatter(5, 4);
  EXPECT_EQ(s.bytes_read, 5 * 8 + 5 * 4 * 4);
  EXPECT_EQ(s.bytes_written, 5 * 4 * 4);
  const auto t = traffic::segment_tile(3, 2, 2, 2);
  EXPECT_EQ(t.bytes_read, 3 * 2 * 4 + 3 * 8);
  EXPECT_EQ(t.bytes_written, 2 * 2 * 2 * 4);
  const auto m = traffic::mod(10, 2);
  EXPECT_EQ(m.bytes_read, 10 * 8 + 3 * 8);
  EXPECT_EQ(m.bytes_written, 10 * 8 + 3 * 8);
}

TEST(Traffic, ReduceIsLowIntensity) {
  const OpProfile p{"reduce", 0, 0, 0, 1.0, 1};
  const auto t = traffic::segment_reduce(1000000, 16, 4000, false);
  OpProfile q = p;
  q.bytes_read = t.bytes_read;
  q.bytes_written = t.bytes_written;
  q.flops = t.flops;
  EXPECT_LT(classify(q, hw(1e9, 1e12)).arithmetic_intensity, 1.0);
}

TEST(Bench, SmallRunHasAllOperatorRows) {
  bench::BenchConfig cfg;
  cfg.columns = 4;
  cfg.values_per_column = 100;
  cfg.num_ids = 1000;
  cfg.id_vocabulary = 100;
  cfg.rows = 1000;
  cfg.dim = 4;
  cfg.repeats = 1;
  const auto profiles = bench::run_benchmarks(cfg);
  std::map<std::string, int64_t> dispatches;
  for (const auto& p : profiles) dispatches[p.name] = p.dispatches;
  for (const auto& name : bench::operator_names()) EXPECT_TRUE(dispatches.contains(name)) << name;
  EXPECT_EQ(bench::operator_names().size(), 8u);
  EXPECT_EQ(dispatches.at("bucketize"), 1);
  EXPECT_EQ(dispatches.at("bucketize (unfused)"), 4);
  EXPECT_EQ(dispatches.at("mod"), 1);
  EXPECT_EQ(dispatches.at("mod (unfused)"), 4);
  const auto csv = emit_report(profiles, hw(50e9, 1e12), ReportFormat::kCsv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(profiles.size() + 1));
}

TEST(Bench, ConfigJson) {
  const auto cfg = bench::BenchConfig::from_json(R"({"columns": 7, "repeats": 2})");
  EXPECT_EQ(cfg.columns, 7);
  EXPECT_EQ(cfg.repeats, 2);
  EXPECT_EQ(cfg.dim, 16);
  EXPECT_THROW(bench::BenchConfig::from_json("[1"), Error);
}

}  // namespace
}  // namespace embstack::roofline
