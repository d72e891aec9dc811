// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// Permutation handling: PIT assignment at t = 0, Euclidean assignment via
// the Hungarian algorithm, and mini-batch conditional OT coupling.

#pragma once

#include <cstdint>
#include <vector>

#include "floss/flowpath.hpp"
#include "floss/geometry.hpp"

namespace floss {

// perm[a] = b means estimate row a is matched to row b ((pi x)_a = x_b).
using Permutation = std::vector<int>;

bool is_valid_permutation(const Permutation& perm);
Permutation compose(const Permutation& outer, const Permutation& inner);
Permutation inverse(const Permutation& perm);

// Square cost matrix, row-major.
struct CostMatrix {
  int n = 0;
  std::vector<double> v;
  double at(int i, int j) const { return v[static_cast<size_t>(i * n + j)]; }
  double& at(int i, int j) { return v[static_cast<size_t>(i * n + j)]; }
};

double assignment_cost(const CostMatrix& cost, const Permutation& perm);

// Exhaustive n! search, lexicographically smallest among ties. n <= 8.
Permutation brute_force_assign(const CostMatrix& cost);

// O(n^3) Hungarian (Jonker-Volgenant potentials), exact optimum.
Permutation hungarian(const CostMatrix& cost);

// Optimal assignment, lexicographically smallest among optimal solutions
// for n <= 8 (exhaustive refinement); plain Hungarian beyond that, where
// exact cost ties are not expected with real-valued data.
Permutation optimal_assign(const CostMatrix& cost);

// Pairwise squared-distance cost between rows of two stacks.
CostMatrix euclidean_cost(const Stack& x0, const Stack& x1);

// argmin_pi ||x0 - pi x1||^2, exact.
Permutation euclidean_assign(const Stack& x0, const Stack& x1);

// argmin over all K! permutations of the sample-wise loss at t = 0.
// K! is bounded by pit_max (the model runs once; t = 0 makes the network
// input permutation-independent).
Permutation pit_assign(const DriftFn& model, const FlowPair& pair, int pit_max = 4);

struct OTBatchPair {
  int i = 0;  // index into the x0 batch
  int j = 0;  // index into the x1 batch
  Permutation perm;  // inner-minimizing source permutation for (i, j)
};

struct OTBatchPlan {
  std::vector<OTBatchPair> pairs;  // perfect matching, one entry per i
  CostMatrix cost;
  double total_cost = 0.0;
  double beta = 0.0;
};

// C_ij = min_pi ||x0_i - pi x1_j||^2 + beta ||c0_i - c1_j||^2, matched by
// the exact optimal assignment on C.
OTBatchPlan ot_couple(const std::vector<Stack>& x0_batch,
                      const std::vector<Stack>& x1_batch,
                      const std::vector<std::vector<double>>& cond_batch,
                      double beta, int ot_max = 64);

}  // namespace floss
