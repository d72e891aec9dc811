// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// K-source linear algebra: mixtures, the mean projector and the centering
// projector. Both projectors are applied as streaming row-mean operations,
// O(KL); no K x K matrix is ever materialized.

#pragma once

#include <cstdint>
#include <vector>

namespace floss {

// K x L matrix of real samples, row-major. Row k is source k.
struct Stack {
  int64_t k = 0;
  int64_t l = 0;
  std::vector<double> data;

  Stack() = default;
  Stack(int64_t k_, int64_t l_) : k(k_), l(l_), data(static_cast<size_t>(k_ * l_), 0.0) {}

  double& at(int64_t row, int64_t col) { return data[static_cast<size_t>(row * l + col)]; }
  double at(int64_t row, int64_t col) const { return data[static_cast<size_t>(row * l + col)]; }
  double* row(int64_t r) { return data.data() + r * l; }
  const double* row(int64_t r) const { return data.data() + r * l; }
};

// Throws std::invalid_argument if shape is inconsistent, K < 2, L < 1 or any
// entry is non-finite.
void validate_stack(const Stack& s, const char* what = "stack");

// y = sum_k s_k.
std::vector<double> mix(const Stack& s);

// All rows equal to mixture / K.
Stack mean_stack_from_mixture(const std::vector<double>& mixture, int64_t k);

// P x: every output row is the column-wise mean of the input rows.
Stack project_mean(const Stack& x);

// P_perp x = x - P x: output columns sum to zero.
Stack project_perp(const Stack& x);

// True when all rows are identical within abs_tol (a MeanStack).
bool is_mean_stack(const Stack& x, double abs_tol = 1e-9);

Stack permute_rows(const Stack& x, const std::vector<int>& perm);

}  // namespace floss
