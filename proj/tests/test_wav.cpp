// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "floss/tensor.hpp"
#include "floss/wav.hpp"

using namespace floss;

namespace {
struct TmpFile {
  std::string path;
  explicit TmpFile(const std::string& name) : path("/tmp/floss_test_" + name) {}
  ~TmpFile() { std::remove(path.c_str()); }
};
}  // namespace

TEST_CASE("float32 round trip is near-exact") {
  TmpFile tmp("f32.wav");
  WavData w;
  w.sample_rate = 16000;
  Rng rng(1);
  w.samples.resize(1000);
  for (auto& s : w.samples) s = 0.5 * rng.normal();
  write_wav(tmp.path, w, WavFormat::kFloat32);
  WavData r = read_wav(tmp.path);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(r.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-7));
}

TEST_CASE("pcm16 round trip within quantization error") {
  TmpFile tmp("pcm16.wav");
  WavData w;
  w.sample_rate = 24000;
  Rng rng(2);
  w.samples.resize(500);
  for (auto& s : w.samples) s = std::tanh(rng.normal());
  write_wav(tmp.path, w, WavFormat::kPcm16);
  WavData r = read_wav(tmp.path);
  CHECK(r.sample_rate == 24000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 32768.0);
}

TEST_CASE("malformed and unsupported files are rejected") {
  CHECK_THROWS_AS(read_wav("/tmp/floss_does_not_exist.wav"), std::runtime_error);

  TmpFile tmp("bad.wav");
  std::ofstream f(tmp.path, std::ios::binary);
  f << "not a wav file at all, just text padding to pass 44 bytes....";
  f.close();
  CHECK_THROWS_AS(read_wav(tmp.path), std::runtime_error);
}
