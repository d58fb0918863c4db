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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "embstack/bench.hpp"
#include "embstack/checkpoint.hpp"
#include "embstack/datagen.hpp"
#include "embstack/roofline.hpp"
#include "embstack/safetensors.hpp"
#include "embstack/trainer.hpp"

namespace fs = std::filesystem;
using namespace embstack;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& out_help) {
  cmd->add_option("--config", args.config, "JSON config file");
  cmd->add_option("--seed", args.seed, "RNG seed (overrides the config)");
  cmd->add_option("--out", args.out, out_help);
}

std::string read_text(const fs::path& path) {
  const auto bytes = safetensors::read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

// Writes to `out`, or stdout when empty or "-".
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
    require(std::cout.good(), ErrorCode::kIo, "stdout: write failed");
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  safetensors::write_bytes(out, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

int gen_data(const CommonArgs& args) {
  auto spec = args.config.empty() ? datagen::toy_spec() : datagen::DataSpec::from_json(read_text(args.config));
  require(!args.out.empty(), ErrorCode::kInvalidArgument, "gen-data: --out is required");
  if (fs::path(args.out).has_parent_path()) fs::create_directories(fs::path(args.out).parent_path());
  datagen::generate_dataset(spec, args.seed.value_or(0), args.out);
  return 0;
}

int bench_ops(const CommonArgs& args, const std::string& hw_path, const std::string& format) {
  auto cfg = args.config.empty() ? bench::BenchConfig{} : bench::BenchConfig::from_json(read_text(args.config));
  if (args.seed) cfg.seed = *args.seed;
  require(format == "csv" || format == "markdown", ErrorCode::kInvalidArgument,
          "bench-ops: --format must be csv or markdown");
  require(!hw_path.empty(), ErrorCode::kInvalidArgument, "bench-ops: --hw is required");
  const auto hw = roofline::HardwareSpec::load(hw_path);
  const auto profiles = bench::run_benchmarks(cfg);
  emit(args.out, roofline::emit_report(
                     profiles, hw, format == "csv" ? roofline::ReportFormat::kCsv : roofline::ReportFormat::kMarkdown));
  return 0;
}

int train_toy(const CommonArgs& args, std::optional<int64_t> steps, std::optional<int64_t> shards) {
  auto cfg = args.config.empty() ? TrainConfig::toy() : TrainConfig::load(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (steps) cfg.steps = *steps;
  if (shards) cfg.num_shards = *shards;
  const fs::path out = args.out.empty() ? fs::path("train_out") : fs::path(args.out);
  const auto result = train_toy(cfg, out);
  if (!result.metrics.empty()) {
    std::printf("steps %lld first_loss %.6f final_loss %.6f\n", static_cast<long long>(result.metrics.size()),
                result.metrics.front().loss, result.metrics.back().loss);
  }
  std::printf("metrics %s\ncheckpoint %s\n", (out / "metrics.csv").string().c_str(),
              (out / "checkpoint").string().c_str());
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int ckpt_inspect(const CommonArgs& args, const std::string& dir) {
  const std::string target = dir.empty() ? args.config : dir;
  require(!target.empty(), ErrorCode::kInvalidArgument, "ckpt-inspect: checkpoint directory is required");
  emit(args.out, inspect_checkpoint(target));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embstack: sparse embedding training toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, bench_args, train_args, inspect_args;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic RCOL dataset");
  add_common(gen, gen_args, "Output dataset file");

  std::string hw, format = "csv";
  auto* bench_cmd = app.add_subcommand("bench-ops", "Benchmark the operator set and print a roofline report");
  add_common(bench_cmd, bench_args, "Report file (default stdout)");
  bench_cmd->add_option("--hw", hw, "Hardware spec JSON");
  bench_cmd->add_option("--format", format, "csv or markdown");

  std::optional<int64_t> steps, shards;
  auto* train = app.add_subcommand("train-toy", "Train the toy model");
  add_common(train, train_args, "Output directory");
  train->add_option("--steps", steps, "Training steps");
  train->add_option("--shards", shards, "Simulated workers");

  std::string dir;
  auto* inspect = app.add_subcommand("ckpt-inspect", "Summarize a checkpoint directory");
  add_common(inspect, inspect_args, "Summary file (default stdout)");
  inspect->add_option("dir", dir, "Checkpoint directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (*gen) return gen_data(gen_args);
    if (*bench_cmd) return bench_ops(bench_args, hw, format);
    if (*train) return train_toy(train_args, steps, shards);
    if (*inspect) return ckpt_inspect(inspect_args, dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.code())).c_str(), one_line(e.what()).c_str());
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(ErrorCode::kIo)).c_str(), one_line(e.what()).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", one_line(e.what()).c_str());
    return 1;
  }
  return 1;
}
