// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace floss {

bool is_valid_permutation(const Permutation& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[static_cast<size_t>(p)])
      return false;
    seen[static_cast<size_t>(p)] = true;
  }
  return true;
}

Permutation compose(const Permutation& outer, const Permutation& inner) {
  Permutation out(outer.size());
  for (size_t i = 0; i < outer.size(); ++i)
    out[i] = inner[static_cast<size_t>(outer[i])];
  return out;
}

Permutation inverse(const Permutation& perm) {
  Permutation out(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    out[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  return out;
}

double assignment_cost(const CostMatrix& cost, const Permutation& perm) {
  double total = 0.0;
  for (int i = 0; i < cost.n; ++i) total += cost.at(i, perm[static_cast<size_t>(i)]);
  return total;
}

Permutation brute_force_assign(const CostMatrix& cost) {
  if (cost.n > 8) throw std::invalid_argument("brute_force_assign: n > 8");
  Permutation perm(static_cast<size_t>(cost.n));
  std::iota(perm.begin(), perm.end(), 0);
  Permutation best = perm;
  double best_cost = assignment_cost(cost, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = assignment_cost(cost, perm);
    if (c < best_cost - 1e-15 * std::max(1.0, std::abs(best_cost))) {
      best_cost = c;
      best = perm;  // strict improvement only: lexicographic tie-break
    }
  }
  return best;
}

Permutation hungarian(const CostMatrix& cost) {
  // Jonker-Volgenant style shortest augmenting paths with potentials.
  const int n = cost.n;
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<size_t>(n + 1), 0);  // 1-based col -> row
  std::vector<int> way(static_cast<size_t>(n + 1), 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<size_t>(n + 1), false);
    do {
      used[static_cast<size_t>(j0)] = true;
      const int i0 = match[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                           v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  Permutation perm(static_cast<size_t>(n));
  for (int j = 1; j <= n; ++j)
    perm[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] = j - 1;
  return perm;
}

Permutation optimal_assign(const CostMatrix& cost) {
  if (cost.n <= 8) return brute_force_assign(cost);
  return hungarian(cost);
}

CostMatrix euclidean_cost(const Stack& x0, const Stack& x1) {
  if (x0.k != x1.k || x0.l != x1.l)
    throw std::invalid_argument("euclidean_cost: shape mismatch " +
                                std::to_string(x0.k) + "x" + std::to_string(x0.l) +
                                " vs " + std::to_string(x1.k) + "x" +
                                std::to_string(x1.l));
  CostMatrix cost;
  cost.n = static_cast<int>(x0.k);
  cost.v.assign(static_cast<size_t>(cost.n * cost.n), 0.0);
  for (int a = 0; a < cost.n; ++a)
    for (int b = 0; b < cost.n; ++b) {
      double acc = 0.0;
      const double* pa = x0.row(a);
      const double* pb = x1.row(b);
      for (int64_t i = 0; i < x0.l; ++i) {
        const double d = pa[i] - pb[i];
        acc += d * d;
      }
      cost.at(a, b) = acc;
    }
  return cost;
}

Permutation euclidean_assign(const Stack& x0, const Stack& x1) {
  const CostMatrix cost = euclidean_cost(x0, x1);
  const Permutation h = hungarian(cost);
  if (cost.n <= 4) {
    // cross-check against exhaustive search; also yields the
    // lexicographically smallest optimum
    const Permutation bf = brute_force_assign(cost);
    const double ch = assignment_cost(cost, h);
    const double cb = assignment_cost(cost, bf);
    if (std::abs(ch - cb) > 1e-9 * std::max(1.0, std::abs(cb)))
      throw std::logic_error("euclidean_assign: Hungarian/brute-force disagree");
    return bf;
  }
  return h;
}

Permutation pit_assign(const DriftFn& model, const FlowPair& pair, int pit_max) {
  const int k = static_cast<int>(pair.x1.k);
  if (k > pit_max)
    throw std::invalid_argument(
        "pit_assign: K = " + std::to_string(k) + " exceeds pit_max = " +
        std::to_string(pit_max) + " (K! model comparisons); use euclidean_assign");
  // At t = 0 the state is x0 regardless of the permutation, so the model
  // runs once and only the target changes per permutation.
  const Stack v = model(0.0, pair.x0, cond_row(pair));

  const auto perm_cost = [&](const Permutation& perm) {
    double cost = 0.0;
    for (int a = 0; a < k; ++a) {
      const double* pv = v.row(a);
      const double* p1 = pair.x1.row(perm[static_cast<size_t>(a)]);
      const double* p0 = pair.x0.row(a);
      for (int64_t i = 0; i < pair.x1.l; ++i) {
        const double d = pv[i] - (p1[i] - p0[i]);
        cost += d * d;
      }
    }
    return cost;
  };
  Permutation perm(static_cast<size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  Permutation best = perm;
  double best_cost = perm_cost(perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double cost = perm_cost(perm);
    if (cost < best_cost - 1e-15 * std::max(1.0, std::abs(best_cost))) {
      best_cost = cost;
      best = perm;  // strict improvement only: lexicographic tie-break
    }
  }
  return best;
}

OTBatchPlan ot_couple(const std::vector<Stack>& x0_batch,
                      const std::vector<Stack>& x1_batch,
                      const std::vector<std::vector<double>>& cond_batch,
                      double beta, int ot_max) {
  const int b = static_cast<int>(x0_batch.size());
  if (b == 0 || x1_batch.size() != static_cast<size_t>(b) ||
      cond_batch.size() != static_cast<size_t>(b))
    throw std::invalid_argument("ot_couple: batch size mismatch");
  if (b > ot_max)
    throw std::invalid_argument("ot_couple: batch " + std::to_string(b) +
                                " exceeds ot_max " + std::to_string(ot_max));
  if (beta <= 0.0) throw std::invalid_argument("ot_couple: beta must be positive");

  OTBatchPlan plan;
  plan.beta = beta;
  plan.cost.n = b;
  plan.cost.v.assign(static_cast<size_t>(b * b), 0.0);
  std::vector<Permutation> inner(static_cast<size_t>(b * b));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      const CostMatrix pairwise = euclidean_cost(x0_batch[static_cast<size_t>(i)],
                                                 x1_batch[static_cast<size_t>(j)]);
      const Permutation pi = optimal_assign(pairwise);
      double cond_dist = 0.0;
      const auto& c0 = cond_batch[static_cast<size_t>(i)];
      const auto& c1 = cond_batch[static_cast<size_t>(j)];
      if (c0.size() != c1.size())
        throw std::invalid_argument("ot_couple: conditioning length mismatch");
      for (size_t s = 0; s < c0.size(); ++s) {
        const double d = c0[s] - c1[s];
        cond_dist += d * d;
      }
      plan.cost.at(i, j) = assignment_cost(pairwise, pi) + beta * cond_dist;
      inner[static_cast<size_t>(i * b + j)] = pi;
    }

  const Permutation match = optimal_assign(plan.cost);
  plan.total_cost = assignment_cost(plan.cost, match);
  for (int i = 0; i < b; ++i) {
    OTBatchPair p;
    p.i = i;
    p.j = match[static_cast<size_t>(i)];
    p.perm = inner[static_cast<size_t>(i * b + p.j)];
    plan.pairs.push_back(std::move(p));
  }
  return plan;
}

}  // namespace floss
