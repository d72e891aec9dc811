// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace floss {

namespace {
constexpr char kMagic[8] = {'F', 'L', 'O', 'S', 'S', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

// The file format is little-endian; so is every platform this builds on.
static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return value;
}
}  // namespace

void save_checkpoint(const std::string& path, const NamedTensorList& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<uint32_t>(tensor.shape.size()));
    for (int64_t d : tensor.shape) write_pod(out, d);
    out.write(reinterpret_cast<const char*>(tensor.v.data()),
              static_cast<std::streamsize>(tensor.v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

NamedTensorList load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version) + " in " + path);
  const auto count = read_pod<uint32_t>(in, path);
  NamedTensorList tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(in, path);
    if (name_len > 4096)
      throw std::runtime_error("checkpoint: malformed name header in " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<uint32_t>(in, path);
    if (rank > 8)
      throw std::runtime_error("checkpoint: malformed shape header in " + path);
    std::vector<int64_t> shape;
    for (uint32_t a = 0; a < rank; ++a) {
      const auto d = read_pod<int64_t>(in, path);
      if (d <= 0)
        throw std::runtime_error("checkpoint: non-positive axis in " + path);
      shape.push_back(d);
    }
    Tensor t(shape.empty() ? std::vector<int64_t>{1} : shape);
    if (!shape.empty()) t.shape = shape;
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

const Tensor& find_tensor(const NamedTensorList& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: tensor '" + name + "' not found");
}

}  // namespace floss
