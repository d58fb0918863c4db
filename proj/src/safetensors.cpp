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

#include "embstack/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace embstack::safetensors {

namespace {

using json = nlohmann::json;

template <typename U>
void put_le(uint8_t* out, U value) {
  for (size_t i = 0; i < sizeof(U); ++i) out[i] = static_cast<uint8_t>(value >> (8 * i));
}

template <typename U>
U get_le(const uint8_t* in) {
  U value = 0;
  for (size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(in[i]) << (8 * i);
  return value;
}

[[noreturn]] void corrupt(const std::string& source, const std::string& what) {
  fail(ErrorCode::kCorrupt, source + ": " + what);
}

}  // namespace

std::string_view dtype_name(DType d) {
  switch (d) {
    case DType::kF32: return "F32";
    case DType::kI64: return "I64";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "F32") return DType::kF32;
  if (name == "I64") return DType::kI64;
  fail(ErrorCode::kFormat, "safetensors: unsupported dtype " + std::string(name));
}

size_t dtype_size(DType d) { return d == DType::kF32 ? 4 : 8; }

int64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
}

Tensor Tensor::from_floats(std::string name, std::vector<int64_t> shape, std::span<const float> values) {
  Tensor t{std::move(name), DType::kF32, std::move(shape), {}};
  require(t.numel() == static_cast<int64_t>(values.size()), ErrorCode::kInvalidArgument,
          "safetensors: shape does not match value count for " + t.name);
  t.data.resize(values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) put_le(&t.data[4 * i], std::bit_cast<uint32_t>(values[i]));
  return t;
}

Tensor Tensor::from_int64(std::string name, std::vector<int64_t> shape, std::span<const int64_t> values) {
  Tensor t{std::move(name), DType::kI64, std::move(shape), {}};
  require(t.numel() == static_cast<int64_t>(values.size()), ErrorCode::kInvalidArgument,
          "safetensors: shape does not match value count for " + t.name);
  t.data.resize(values.size() * 8);
  for (size_t i = 0; i < values.size(); ++i) put_le(&t.data[8 * i], std::bit_cast<uint64_t>(values[i]));
  return t;
}

std::vector<float> Tensor::to_floats() const {
  require(dtype == DType::kF32, ErrorCode::kFormat, "safetensors: " + name + " is not F32");
  std::vector<float> out(data.size() / 4);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_le<uint32_t>(&data[4 * i]));
  return out;
}

std::vector<int64_t> Tensor::to_int64() const {
  require(dtype == DType::kI64, ErrorCode::kFormat, "safetensors: " + name + " is not I64");
  std::vector<int64_t> out(data.size() / 8);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<int64_t>(get_le<uint64_t>(&data[8 * i]));
  return out;
}

const Tensor* File::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<uint8_t> serialize(const std::vector<Tensor>& tensors,
                               const std::map<std::string, std::string>& metadata) {
  std::vector<const Tensor*> order;
  for (const auto& t : tensors) {
    require(t.name != "__metadata__", ErrorCode::kInvalidArgument, "safetensors: reserved tensor name");
    require(static_cast<int64_t>(t.data.size()) == t.numel() * static_cast<int64_t>(dtype_size(t.dtype)),
            ErrorCode::kInvalidArgument, "safetensors: payload size mismatch for " + t.name);
    order.push_back(&t);
  }
  std::sort(order.begin(), order.end(), [](const Tensor* a, const Tensor* b) { return a->name < b->name; });
  for (size_t i = 1; i < order.size(); ++i) {
    require(order[i]->name != order[i - 1]->name, ErrorCode::kInvalidArgument,
            "safetensors: duplicate tensor name " + order[i]->name);
  }

  json header = json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  uint64_t offset = 0;
  for (const Tensor* t : order) {
    header[t->name] = {{"dtype", dtype_name(t->dtype)},
                       {"shape", t->shape},
                       {"data_offsets", {offset, offset + t->data.size()}}};
    offset += t->data.size();
  }
  const std::string text = header.dump();

  std::vector<uint8_t> out(8 + text.size() + offset);
  put_le<uint64_t>(out.data(), text.size());
  std::copy(text.begin(), text.end(), out.begin() + 8);
  auto cursor = out.begin() + 8 + static_cast<std::ptrdiff_t>(text.size());
  for (const Tensor* t : order) cursor = std::copy(t->data.begin(), t->data.end(), cursor);
  return out;
}

File parse(std::span<const uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 8) corrupt(source, "file shorter than the 8-byte header length");
  const uint64_t header_len = get_le<uint64_t>(bytes.data());
  if (header_len > bytes.size() - 8) corrupt(source, "header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    corrupt(source, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) corrupt(source, "header is not a JSON object");

  const auto payload = bytes.subspan(8 + header_len);
  File file;
  struct Entry {
    uint64_t begin, end;
    Tensor tensor;
  };
  std::vector<Entry> entries;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") {
      if (!info.is_object()) corrupt(source, "__metadata__ is not an object");
      for (const auto& [k, v] : info.items()) {
        if (!v.is_string()) corrupt(source, "__metadata__ value for " + k + " is not a string");
        file.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    try {
      Entry e;
      e.tensor.name = name;
      e.tensor.dtype = parse_dtype(info.at("dtype").get<std::string>());
      e.tensor.shape = info.at("shape").get<std::vector<int64_t>>();
      const auto offsets = info.at("data_offsets").get<std::vector<uint64_t>>();
      if (offsets.size() != 2) corrupt(source, "data_offsets of " + name + " must have two entries");
      e.begin = offsets[0];
      e.end = offsets[1];
      for (int64_t d : e.tensor.shape) {
        if (d < 0) corrupt(source, "negative dimension in " + name);
      }
      if (e.begin > e.end || e.end > payload.size()) corrupt(source, "data_offsets of " + name + " out of range");
      if (e.end - e.begin != static_cast<uint64_t>(e.tensor.numel()) * dtype_size(e.tensor.dtype)) {
        corrupt(source, "payload size of " + name + " does not match dtype and shape");
      }
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      corrupt(source, "malformed entry " + name + ": " + ex.what());
    } catch (const Error& ex) {
      if (ex.code() == ErrorCode::kCorrupt) throw;
      corrupt(source, ex.what());
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  uint64_t expected = 0;
  for (auto& e : entries) {
    if (e.begin != expected) corrupt(source, "tensor payloads overlap or leave gaps at " + e.tensor.name);
    e.tensor.data.assign(payload.begin() + static_cast<std::ptrdiff_t>(e.begin),
                         payload.begin() + static_cast<std::ptrdiff_t>(e.end));
    expected = e.end;
    file.tensors.push_back(std::move(e.tensor));
  }
  if (expected != payload.size()) corrupt(source, "trailing bytes after last tensor payload");
  return file;
}

std::vector<uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::kIo, "read failed: " + path.string());
  return bytes;
}

void write_bytes(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

void write_file(const std::filesystem::path& path, const std::vector<Tensor>& tensors,
                const std::map<std::string, std::string>& metadata) {
  write_bytes(path, serialize(tensors, metadata));
}

File read_file(const std::filesystem::path& path) { return parse(read_bytes(path), path.string()); }

}  // namespace embstack::safetensors
