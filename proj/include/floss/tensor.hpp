// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace floss {

// Deterministic RNG (xoshiro256++ seeded via splitmix64). We avoid
// std::normal_distribution so draw sequences are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Derive an independent stream.
  Rng fork(uint64_t tag) { return Rng(next_u64() ^ (tag * 0x9e3779b97f4a7c15ULL)); }

 private:
  uint64_t s_[4];
};

// Dense row-major tensor of doubles, up to 5 axes.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw std::invalid_argument("tensor axis must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, double x) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }

  static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = stddev * rng.normal();
    return t;
  }

  static Tensor from(std::vector<int64_t> s, std::vector<double> data) {
    Tensor t;
    t.shape = std::move(s);
    if (numel_of(t.shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor data size does not match shape");
    t.v = std::move(data);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace floss
