// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace floss {

void validate_stack(const Stack& s, const char* what) {
  if (s.k < 2)
    throw std::invalid_argument(std::string(what) + ": need at least 2 sources, got " +
                                std::to_string(s.k));
  if (s.l < 1)
    throw std::invalid_argument(std::string(what) + ": length must be positive");
  if (static_cast<int64_t>(s.data.size()) != s.k * s.l)
    throw std::invalid_argument(std::string(what) + ": data size " +
                                std::to_string(s.data.size()) + " != K*L");
  for (size_t i = 0; i < s.data.size(); ++i)
    if (!std::isfinite(s.data[i]))
      throw std::invalid_argument(std::string(what) + ": non-finite entry at index " +
                                  std::to_string(i));
}

std::vector<double> mix(const Stack& s) {
  validate_stack(s, "mix");
  std::vector<double> y(static_cast<size_t>(s.l), 0.0);
  for (int64_t r = 0; r < s.k; ++r) {
    const double* p = s.row(r);
    for (int64_t i = 0; i < s.l; ++i) y[static_cast<size_t>(i)] += p[i];
  }
  return y;
}

Stack mean_stack_from_mixture(const std::vector<double>& mixture, int64_t k) {
  if (k < 2) throw std::invalid_argument("mean_stack: need at least 2 sources");
  const int64_t l = static_cast<int64_t>(mixture.size());
  Stack out(k, l);
  const double inv = 1.0 / static_cast<double>(k);
  for (int64_t r = 0; r < k; ++r)
    for (int64_t i = 0; i < l; ++i) out.at(r, i) = mixture[static_cast<size_t>(i)] * inv;
  return out;
}

Stack project_mean(const Stack& x) {
  Stack out(x.k, x.l);
  const double inv = 1.0 / static_cast<double>(x.k);
  std::vector<double> m(static_cast<size_t>(x.l), 0.0);
  for (int64_t r = 0; r < x.k; ++r) {
    const double* p = x.row(r);
    for (int64_t i = 0; i < x.l; ++i) m[static_cast<size_t>(i)] += p[i];
  }
  for (auto& v : m) v *= inv;
  for (int64_t r = 0; r < x.k; ++r)
    for (int64_t i = 0; i < x.l; ++i) out.at(r, i) = m[static_cast<size_t>(i)];
  return out;
}

Stack project_perp(const Stack& x) {
  Stack out(x.k, x.l);
  const double inv = 1.0 / static_cast<double>(x.k);
  std::vector<double> m(static_cast<size_t>(x.l), 0.0);
  for (int64_t r = 0; r < x.k; ++r) {
    const double* p = x.row(r);
    for (int64_t i = 0; i < x.l; ++i) m[static_cast<size_t>(i)] += p[i];
  }
  for (auto& v : m) v *= inv;
  for (int64_t r = 0; r < x.k; ++r)
    for (int64_t i = 0; i < x.l; ++i)
      out.at(r, i) = x.at(r, i) - m[static_cast<size_t>(i)];
  return out;
}

bool is_mean_stack(const Stack& x, double abs_tol) {
  for (int64_t r = 1; r < x.k; ++r)
    for (int64_t i = 0; i < x.l; ++i)
      if (std::abs(x.at(r, i) - x.at(0, i)) > abs_tol) return false;
  return true;
}

Stack permute_rows(const Stack& x, const std::vector<int>& perm) {
  if (static_cast<int64_t>(perm.size()) != x.k)
    throw std::invalid_argument("permute_rows: perm size != K");
  Stack out(x.k, x.l);
  for (int64_t r = 0; r < x.k; ++r) {
    const double* src = x.row(perm[static_cast<size_t>(r)]);
    double* dst = out.row(r);
    for (int64_t i = 0; i < x.l; ++i) dst[i] = src[i];
  }
  return out;
}

}  // namespace floss
