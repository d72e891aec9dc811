// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace floss {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}
void wr_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: " + path + " is not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = rd_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > bytes.size())
        throw std::runtime_error("wav: truncated fmt chunk in " + path);
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);
  }
  if (data_off == 0) throw std::runtime_error("wav: no data chunk in " + path);
  if (channels != 1)
    throw std::runtime_error("wav: " + path + " has " + std::to_string(channels) +
                             " channels; only mono is supported");

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const size_t n = data_len / 2;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const int16_t s = static_cast<int16_t>(rd_u16(bytes.data() + data_off + 2 * i));
      out.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const size_t n = data_len / 4;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = rd_u32(bytes.data() + data_off + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      out.samples[i] = static_cast<double>(v);
    }
  } else {
    throw std::runtime_error("wav: " + path + " uses unsupported format " +
                             std::to_string(format) + "/" + std::to_string(bits) +
                             "-bit; need PCM16 or float32");
  }
  return out;
}

void write_wav(const std::string& path, const WavData& data, WavFormat format) {
  const uint16_t bits = (format == WavFormat::kPcm16) ? 16 : 32;
  const uint16_t fmt = (format == WavFormat::kPcm16) ? 1 : 3;
  const uint32_t n = static_cast<uint32_t>(data.samples.size());
  const uint32_t bytes_per = bits / 8;
  const uint32_t data_len = n * bytes_per;

  std::vector<uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(out, 16);
  wr_u16(out, fmt);
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<uint32_t>(data.sample_rate));
  wr_u32(out, static_cast<uint32_t>(data.sample_rate) * bytes_per);
  wr_u16(out, static_cast<uint16_t>(bytes_per));
  wr_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(out, data_len);
  for (double x : data.samples) {
    if (format == WavFormat::kPcm16) {
      const double clamped = std::clamp(x, -1.0, 1.0);
      const int32_t q = std::clamp<int32_t>(
          static_cast<int32_t>(std::lrint(clamped * 32768.0)), -32768, 32767);
      wr_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
    } else {
      const float v = static_cast<float>(x);
      uint32_t u;
      std::memcpy(&u, &v, 4);
      wr_u32(out, u);
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("wav: short write to " + path);
}

}  // namespace floss
