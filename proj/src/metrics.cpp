// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floss {

double si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size())
    throw std::invalid_argument("si_sdr: length mismatch " +
                                std::to_string(est.size()) + " vs " +
                                std::to_string(ref.size()));
  double ref_energy = 0.0, dot = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    dot += est[i] * ref[i];
  }
  if (ref_energy <= 0.0)
    throw std::invalid_argument("si_sdr: zero reference signal");
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, error_energy = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = alpha * ref[i];
    const double e = est[i] - t;
    target_energy += t * t;
    error_energy += e * e;
  }
  if (error_energy <= 0.0) return kSiSdrClampDb;
  if (target_energy <= 0.0) return -kSiSdrClampDb;
  const double db = 10.0 * std::log10(target_energy / error_energy);
  if (db > kSiSdrClampDb) return kSiSdrClampDb;
  if (db < -kSiSdrClampDb) return -kSiSdrClampDb;
  return db;
}

PermScore best_perm_score(const Stack& est, const Stack& ref) {
  if (est.k != ref.k || est.l != ref.l)
    throw std::invalid_argument("best_perm_score: shape mismatch");
  const int k = static_cast<int>(est.k);
  CostMatrix cost;  // negated SI-SDR so the assignment minimizes
  cost.n = k;
  cost.v.assign(static_cast<size_t>(k * k), 0.0);
  for (int a = 0; a < k; ++a) {
    std::vector<double> erow(est.row(a), est.row(a) + est.l);
    for (int b = 0; b < k; ++b) {
      std::vector<double> rrow(ref.row(b), ref.row(b) + ref.l);
      cost.at(a, b) = -si_sdr(erow, rrow);
    }
  }
  PermScore score;
  score.perm = optimal_assign(cost);
  for (int a = 0; a < k; ++a) {
    score.per_source.push_back(-cost.at(a, score.perm[static_cast<size_t>(a)]));
    score.mean += score.per_source.back();
  }
  score.mean /= static_cast<double>(k);
  return score;
}

}  // namespace floss
