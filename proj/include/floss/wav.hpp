// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Mono WAV read/write, PCM 16-bit and 32-bit float.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace floss {

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, [-1, 1] nominal
};

// Throws std::runtime_error on malformed files, multi-channel input, or
// unsupported sample formats.
WavData read_wav(const std::string& path);

enum class WavFormat { kPcm16, kFloat32 };

void write_wav(const std::string& path, const WavData& data,
               WavFormat format = WavFormat::kFloat32);

}  // namespace floss
