// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "floss/dsp.hpp"

using namespace floss;

namespace {
std::vector<double> random_signal(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = rng.normal();
  return x;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}
}  // namespace

TEST_CASE("stft of zero signal is zero") {
  StftPlan plan = make_stft_plan({});
  Tensor spec = stft(std::vector<double>(1600, 0.0), plan);
  for (double v : spec.v) CHECK(v == 0.0);
}

TEST_CASE("istft(stft(x)) reconstructs within 1e-6 relative") {
  StftPlan plan = make_stft_plan({});
  for (int64_t n : {1600, 8000, 1601}) {
    auto x = random_signal(n, 1000 + static_cast<uint64_t>(n));
    auto y = istft(stft(x, plan), plan, n);
    CHECK(rel_err(y, x) < 1e-6);
  }
}

TEST_CASE("pure sinusoid at a bin center concentrates energy in that bin") {
  StftPlan plan = make_stft_plan({});
  const int64_t bin = 20;  // 20 * 50 Hz = 1 kHz
  const double freq = static_cast<double>(bin) * 16000.0 / 320.0;
  std::vector<double> x(3200);
  for (size_t i = 0; i < x.size(); ++i)
    x[i] = std::sin(2.0 * M_PI * freq * static_cast<double>(i) / 16000.0);
  Tensor spec = stft(x, plan);
  const int64_t t_mid = spec.shape[0] / 2;
  const int64_t f = plan.n_bins;
  double best = -1.0;
  int64_t best_bin = -1;
  for (int64_t b = 0; b < f; ++b) {
    const double re = spec.v[static_cast<size_t>((t_mid * f + b) * 2)];
    const double im = spec.v[static_cast<size_t>((t_mid * f + b) * 2 + 1)];
    const double e = re * re + im * im;
    if (e > best) {
      best = e;
      best_bin = b;
    }
  }
  CHECK(best_bin == bin);
}

TEST_CASE("compress: exponent 0.33, phase preserved, exact inverse") {
  Tensor z = Tensor::from({1, 2}, {8.0, 0.0});
  Tensor c = compress(z);
  CHECK(c.v[0] == doctest::Approx(std::pow(8.0, 0.33)).epsilon(1e-12));
  CHECK(c.v[0] == doctest::Approx(1.9866).epsilon(5e-4));
  CHECK(c.v[1] == 0.0);

  Rng rng(3);
  Tensor r = Tensor::randn({50, 2}, rng);
  Tensor back = decompress(compress(r));
  for (int64_t i = 0; i < r.numel(); ++i)
    CHECK(back.v[static_cast<size_t>(i)] ==
          doctest::Approx(r.v[static_cast<size_t>(i)]).epsilon(1e-6));

  Tensor zero = compress(Tensor::zeros({4, 2}));
  for (double v : zero.v) CHECK(v == 0.0);
}

TEST_CASE("mel split bands tile all bins with monotone edges") {
  MelSplit mel = make_mel_split(16, 161, 16000);
  int64_t expect = 0;
  for (int64_t b = 0; b < mel.n_bands; ++b) {
    CHECK(mel.band_start[static_cast<size_t>(b)] == expect);
    CHECK(mel.band_width[static_cast<size_t>(b)] >= 1);
    expect += mel.band_width[static_cast<size_t>(b)];
  }
  CHECK(expect == 161);
  CHECK(mel.exact);
}

TEST_CASE("band split/unsplit round trip is exact with orthonormal projections") {
  MelSplit mel = make_mel_split(16, 161, 16000);
  Rng rng(9);
  Tensor spec = Tensor::randn({4, 161, 2}, rng);
  Tensor back = band_unsplit(band_split(spec, mel), mel);
  for (int64_t i = 0; i < spec.numel(); ++i)
    CHECK(std::abs(back.v[static_cast<size_t>(i)] - spec.v[static_cast<size_t>(i)]) < 1e-10);
}

TEST_CASE("identity-style split: B=1 with full feature dim reshapes") {
  MelSplit mel = make_mel_split(1, 8, 16000);
  CHECK(mel.feat_dim == 16);
  Tensor spec = Tensor::zeros({3, 8, 2});
  Tensor f = band_split(spec, mel);
  CHECK(f.shape == std::vector<int64_t>{3, 1, 16});
  for (double v : f.v) CHECK(v == 0.0);
}

TEST_CASE("exact invertibility request rejects undersized feature dims") {
  CHECK_THROWS_AS(make_mel_split(4, 161, 16000, 8, true), std::invalid_argument);
  MelSplit lossy = make_mel_split(4, 161, 16000, 8, false);
  CHECK(!lossy.exact);
}

TEST_CASE("global_norm: zero-mean unit-std per source, degenerate guarded") {
  Rng rng(17);
  Tensor feats = Tensor::randn({3, 5, 4, 6}, rng, 3.0);
  // make source 2 constant
  for (int64_t i = 0; i < 5 * 4 * 6; ++i) feats.v[static_cast<size_t>(2 * 120 + i)] = 1.5;
  NormStats stats;
  ad::Var out = global_norm_v(ad::constant(feats), &stats);
  for (int64_t s = 0; s < 2; ++s) {
    double mean = 0.0, var = 0.0;
    for (int64_t i = 0; i < 120; ++i) mean += out->val.v[static_cast<size_t>(s * 120 + i)];
    mean /= 120.0;
    for (int64_t i = 0; i < 120; ++i) {
      const double d = out->val.v[static_cast<size_t>(s * 120 + i)] - mean;
      var += d * d;
    }
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::sqrt(var / 120.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // constant source maps to exactly zero
  for (int64_t i = 0; i < 120; ++i)
    CHECK(out->val.v[static_cast<size_t>(2 * 120 + i)] == 0.0);
  CHECK(stats.std[2] == 1.0);
}

TEST_CASE("global_norm is permutation-equivariant over sources") {
  Rng rng(23);
  Tensor feats = Tensor::randn({3, 4, 5}, rng);
  Tensor swapped = feats;
  for (int64_t i = 0; i < 20; ++i)
    std::swap(swapped.v[static_cast<size_t>(i)], swapped.v[static_cast<size_t>(20 + i)]);
  ad::Var a = global_norm_v(ad::constant(feats));
  ad::Var b = global_norm_v(ad::constant(swapped));
  for (int64_t i = 0; i < 20; ++i) {
    CHECK(a->val.v[static_cast<size_t>(i)] == b->val.v[static_cast<size_t>(20 + i)]);
    CHECK(a->val.v[static_cast<size_t>(20 + i)] == b->val.v[static_cast<size_t>(i)]);
  }
}

TEST_CASE("end-to-end codec: decode(encode(x)) within 1e-5 for 1-second audio") {
  StftPlan plan = make_stft_plan({});
  MelSplit mel = make_mel_split(16, plan.n_bins, plan.cfg.sample_rate);
  for (uint64_t seed : {41u, 42u}) {
    auto x = random_signal(16000, seed);
    Tensor feats = encode(x, plan, mel);
    auto y = decode(feats, plan, mel, 16000);
    CHECK(rel_err(y, x) < 1e-5);
  }
}
