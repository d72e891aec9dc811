// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Scale-invariant SDR and best-permutation scoring of separated stacks.

#pragma once

#include <cstdint>
#include <vector>

#include "floss/assignment.hpp"
#include "floss/geometry.hpp"

namespace floss {

// Clamp band for SI-SDR in dB: perfect or degenerate estimates map to the
// band edges so downstream CSVs stay finite.
inline constexpr double kSiSdrClampDb = 100.0;

// 10 log10(||a ref||^2 / ||est - a ref||^2) with a = <est, ref> / ||ref||^2,
// clamped to [-100, 100] dB. Throws std::invalid_argument on a zero
// reference or length mismatch.
double si_sdr(const std::vector<double>& est, const std::vector<double>& ref);

struct PermScore {
  Permutation perm;               // est row r is scored against ref row perm[r]
  std::vector<double> per_source; // SI-SDR per est row under perm
  double mean = 0.0;
};

// Maximizes the mean SI-SDR over row permutations: exhaustive for K <= 8,
// Hungarian beyond.
PermScore best_perm_score(const Stack& est, const Stack& ref);

}  // namespace floss
