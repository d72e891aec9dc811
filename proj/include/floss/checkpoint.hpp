// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor checkpoint files.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "FLOSSCK1"
//   u32          format version (1)
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, u32 rank,
//                rank x i64 axis sizes, numel x f64 values
//
// EMA shadow copies are stored under the same file with an "ema/" name
// prefix. Tensor order is preserved on round trip.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "floss/tensor.hpp"

namespace floss {

using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensorList& tensors);

// Throws std::runtime_error on I/O failure, bad magic or a malformed header.
NamedTensorList load_checkpoint(const std::string& path);

// Linear scan; throws std::runtime_error when the name is absent.
const Tensor& find_tensor(const NamedTensorList& tensors, const std::string& name);

}  // namespace floss
