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

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "embstack/common.hpp"

namespace embstack::safetensors {

enum class DType { kF32, kI64 };

std::string_view dtype_name(DType d);
DType parse_dtype(std::string_view name);
size_t dtype_size(DType d);

/// A named tensor with its little-endian payload.
struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<int64_t> shape;
  std::vector<uint8_t> data;

  int64_t numel() const;

  static Tensor from_floats(std::string name, std::vector<int64_t> shape, std::span<const float> values);
  static Tensor from_float_rows(std::string name, int64_t rows, int64_t cols, std::span<const float> values) {
    return from_floats(std::move(name), {rows, cols}, values);
  }
  static Tensor from_int64(std::string name, std::vector<int64_t> shape, std::span<const int64_t> values);
  std::vector<float> to_floats() const;
  std::vector<int64_t> to_int64() const;
};

struct File {
  /// Tensors in payload (offset) order.
  std::vector<Tensor> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor* find(std::string_view name) const;
};

/// Serializes to the container layout: u64 LE header length, compact JSON
/// header, then payloads packed in name order with no padding.
std::vector<uint8_t> serialize(const std::vector<Tensor>& tensors,
                               const std::map<std::string, std::string>& metadata = {});

/// Parses and validates a container. `source` names the input in errors.
File parse(std::span<const uint8_t> bytes, const std::string& source = "<memory>");

void write_file(const std::filesystem::path& path, const std::vector<Tensor>& tensors,
                const std::map<std::string, std::string>& metadata = {});
File read_file(const std::filesystem::path& path);

std::vector<uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace embstack::safetensors
