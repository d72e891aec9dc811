// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Noise covariance design driven by the mixture: constant scale, active
// power scale, or per-sample envelope scale.

#pragma once

#include <cstdint>
#include <vector>

#include "floss/geometry.hpp"
#include "floss/tensor.hpp"

namespace floss {

// Energy envelope of a mixture (power units).
struct Envelope {
  std::vector<double> values;
  int64_t window_len = 0;
  double threshold = 0.0;  // minimum-energy floor, power units
};

enum class ShaperKind { kConstant, kActivePower, kEnvelope };

struct NoiseShaper {
  ShaperKind kind = ShaperKind::kConstant;
  double sigma0 = 1.0;     // constant kind
  double sigma_act = 0.0;  // active-power kind
  Envelope env;            // envelope kind
  int64_t length = 0;      // L this shaper was built for (0 = any, constant)
};

// Squared samples convolved with a unit-sum Hamming window (odd length >= 3),
// zero-padded at the edges. Threshold defaults to threshold_db below the
// envelope max, floored at 1e-8 absolute.
Envelope envelope(const std::vector<double>& mixture, int64_t window_len,
                  double threshold_db = 40.0);

// sqrt of the mean envelope over samples above the threshold; 0 if none.
double active_power(const Envelope& env);

NoiseShaper make_constant_shaper(double sigma0);
NoiseShaper make_active_power_shaper(const std::vector<double>& mixture,
                                     int64_t window_len, double threshold_db = 40.0);
NoiseShaper make_envelope_shaper(const std::vector<double>& mixture,
                                 int64_t window_len, double threshold_db = 40.0);

// Z = z_white * T(mixture). Column n of the envelope kind is scaled by
// sqrt(env[n]); zero envelope means zero noise there.
Stack apply_shaper(const NoiseShaper& shaper, const Stack& z_white);

// Convenience: draw white noise and shape it.
Stack draw_shaped_noise(const NoiseShaper& shaper, int64_t k, int64_t l, Rng& rng);

}  // namespace floss
