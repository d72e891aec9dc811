// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/noiseshape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floss {

namespace {
// Symmetric Hamming taps scaled to unit sum.
std::vector<double> unit_hamming(int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                               static_cast<double>(n - 1));
    sum += w[static_cast<size_t>(i)];
  }
  for (auto& x : w) x /= sum;
  return w;
}
}  // namespace

Envelope envelope(const std::vector<double>& mixture, int64_t window_len,
                  double threshold_db) {
  const int64_t l = static_cast<int64_t>(mixture.size());
  if (window_len < 3 || window_len % 2 == 0)
    throw std::invalid_argument("envelope: window_len must be odd and >= 3");
  if (window_len > l)
    throw std::invalid_argument("envelope: window_len " + std::to_string(window_len) +
                                " exceeds signal length " + std::to_string(l));
  const auto w = unit_hamming(window_len);
  const int64_t half = window_len / 2;
  Envelope env;
  env.window_len = window_len;
  env.values.assign(static_cast<size_t>(l), 0.0);
  for (int64_t n = 0; n < l; ++n) {
    double acc = 0.0;
    const int64_t lo = std::max<int64_t>(0, n - half);
    const int64_t hi = std::min<int64_t>(l - 1, n + half);
    for (int64_t m = lo; m <= hi; ++m) {
      const double x = mixture[static_cast<size_t>(m)];
      acc += x * x * w[static_cast<size_t>(m - n + half)];
    }
    env.values[static_cast<size_t>(n)] = acc;
  }
  double mx = 0.0;
  for (double v : env.values) mx = std::max(mx, v);
  env.threshold = std::max(mx * std::pow(10.0, -threshold_db / 10.0), 1e-8);
  return env;
}

double active_power(const Envelope& env) {
  double sum = 0.0;
  int64_t count = 0;
  for (double v : env.values)
    if (v > env.threshold) {
      sum += v;
      ++count;
    }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

NoiseShaper make_constant_shaper(double sigma0) {
  if (sigma0 <= 0.0)
    throw std::invalid_argument("constant shaper: sigma0 must be positive");
  NoiseShaper s;
  s.kind = ShaperKind::kConstant;
  s.sigma0 = sigma0;
  return s;
}

NoiseShaper make_active_power_shaper(const std::vector<double>& mixture,
                                     int64_t window_len, double threshold_db) {
  NoiseShaper s;
  s.kind = ShaperKind::kActivePower;
  s.env = envelope(mixture, window_len, threshold_db);
  s.sigma_act = active_power(s.env);
  s.length = static_cast<int64_t>(mixture.size());
  return s;
}

NoiseShaper make_envelope_shaper(const std::vector<double>& mixture,
                                 int64_t window_len, double threshold_db) {
  NoiseShaper s;
  s.kind = ShaperKind::kEnvelope;
  s.env = envelope(mixture, window_len, threshold_db);
  s.length = static_cast<int64_t>(mixture.size());
  return s;
}

Stack apply_shaper(const NoiseShaper& shaper, const Stack& z_white) {
  if (shaper.length > 0 && shaper.length != z_white.l)
    throw std::invalid_argument("apply_shaper: shaper built for length " +
                                std::to_string(shaper.length) + ", got " +
                                std::to_string(z_white.l));
  Stack out(z_white.k, z_white.l);
  switch (shaper.kind) {
    case ShaperKind::kConstant:
      for (size_t i = 0; i < z_white.data.size(); ++i)
        out.data[i] = shaper.sigma0 * z_white.data[i];
      break;
    case ShaperKind::kActivePower:
      for (size_t i = 0; i < z_white.data.size(); ++i)
        out.data[i] = shaper.sigma_act * z_white.data[i];
      break;
    case ShaperKind::kEnvelope:
      for (int64_t r = 0; r < z_white.k; ++r)
        for (int64_t n = 0; n < z_white.l; ++n)
          out.at(r, n) =
              std::sqrt(shaper.env.values[static_cast<size_t>(n)]) * z_white.at(r, n);
      break;
  }
  return out;
}

Stack draw_shaped_noise(const NoiseShaper& shaper, int64_t k, int64_t l, Rng& rng) {
  Stack z(k, l);
  for (auto& x : z.data) x = rng.normal();
  return apply_shaper(shaper, z);
}

}  // namespace floss
