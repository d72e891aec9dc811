// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "floss/assignment.hpp"
#include "floss/dsp.hpp"
#include "floss/losses.hpp"
#include "floss/net.hpp"
#include "floss/sampler.hpp"

namespace floss {

namespace {

Stack random_stack(int64_t k, int64_t l, Rng& rng) {
  Stack s(k, l);
  for (auto& x : s.data) x = rng.normal();
  return s;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

NetConfig selftest_net_config() {
  NetConfig cfg;
  cfg.n_blocks = 1;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.n_bands = 4;
  cfg.time_embed_dim = 8;
  cfg.time_hidden = 16;
  cfg.mlp_mult = 2;
  cfg.stft.sample_rate = 8000;
  cfg.stft.frame_len = 160;
  cfg.stft.hop = 80;
  validate_net_config(cfg);
  return cfg;
}

SelfTestItem check_projectors(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Stack x = random_stack(3, 64, rng);
    Stack pm = project_mean(x);
    Stack pp = project_perp(x);
    Stack pp2 = project_perp(pp);
    double dot = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
      worst = std::max(worst, std::abs(pm.data[i] + pp.data[i] - x.data[i]));
      worst = std::max(worst, std::abs(pp2.data[i] - pp.data[i]));
      dot += pm.data[i] * pp.data[i];
    }
    worst = std::max(worst, std::abs(dot) / x.data.size());
  }
  return {"projector algebra (complement, idempotence, orthogonality)",
          worst < 1e-10, "max err " + std::to_string(worst)};
}

SelfTestItem check_equivariance(Rng& rng) {
  VelocityNet net(selftest_net_config(), rng.next_u64());
  double worst = 0.0;
  const int64_t k = 3, l = 512;
  std::vector<double> cond(l);
  for (auto& v : cond) v = rng.normal();
  Stack x = random_stack(k, l, rng);
  Stack base = net.forward_stack(0.3, x, cond);
  Permutation perm = {0, 1, 2};
  do {
    Stack px = permute_rows(x, perm);
    Stack out = net.forward_stack(0.3, px, cond);
    Stack pb = permute_rows(base, perm);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) {
      num += (out.data[i] - pb.data[i]) * (out.data[i] - pb.data[i]);
      den += pb.data[i] * pb.data[i];
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {"permutation equivariance (K=3, all 6 permutations)", worst < 1e-10,
          "max rel err " + std::to_string(worst)};
}

SelfTestItem check_pit_oracle(Rng& rng) {
  bool ok = true;
  for (int rep = 0; rep < 20 && ok; ++rep) {
    Stack sources = random_stack(3, 64, rng);
    NoiseShaper shaper = make_constant_shaper(1.0);
    FlowPair pair = make_flow_pair(sources, shaper, rng);
    DriftFn drift = wrapped([](double, const Stack& x, const std::vector<double>&) {
      Stack r = x;
      for (auto& v : r.data) v = std::tanh(v);
      return r;
    });
    Permutation got = pit_assign(drift, pair);
    // exhaustive search over all 3! permutations at t = 0
    Permutation best = {0, 1, 2}, p = {0, 1, 2};
    double best_cost = loss_raw(drift, pair, p, 0.0);
    while (std::next_permutation(p.begin(), p.end())) {
      const double c = loss_raw(drift, pair, p, 0.0);
      if (c < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
        best_cost = c;
        best = p;
      }
    }
    ok = got == best;
  }
  return {"PIT assignment matches exhaustive K! search", ok,
          ok ? "20 instances" : "mismatch with brute force"};
}

SelfTestItem check_gradients(Rng& rng) {
  VelocityNet net(selftest_net_config(), rng.next_u64());
  NoiseShaper shaper = make_constant_shaper(1.0);
  Stack sources = random_stack(2, 512, rng);
  FlowPair pair = make_flow_pair(sources, shaper, rng);
  const double denom = target_norm2(pair);
  const double t = 0.4;
  FlowState st = interpolate(pair, t);
  const Stack x_perp = project_perp(st.x);
  const Stack tgt = target(pair);

  auto loss_at = [&]() {
    ad::Var out = net.forward(t, x_perp, cond_row(pair));
    ad::Var pred = ad::sub(out, ad::mean_axis(out, 0));
    return loss_graph(pred, tgt, denom, LossKind::kDb);
  };
  ad::Var loss = loss_at();
  ad::backward(loss);
  double worst = 0.0;
  const double h = 1e-4;
  for (auto& [name, p] : net.params()) {
    if (p->grad.v.empty()) continue;
    const size_t j = rng.next_u64() % p->val.v.size();
    const double keep = p->val.v[j];
    p->val.v[j] = keep + h;
    const double up = loss_at()->val.v[0];
    p->val.v[j] = keep - h;
    const double dn = loss_at()->val.v[0];
    p->val.v[j] = keep;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, rel_err(p->grad.v[j], fd));
  }
  return {"end-to-end dB loss gradient vs finite differences", worst < 1e-4,
          "max rel err " + std::to_string(worst)};
}

SelfTestItem check_codec(Rng& rng) {
  StftConfig sc;
  sc.sample_rate = 8000;
  sc.frame_len = 160;
  sc.hop = 80;
  StftPlan plan = make_stft_plan(sc);
  MelSplit mel = make_mel_split(4, plan.n_bins, sc.sample_rate);
  std::vector<double> x(8000);
  for (auto& v : x) v = rng.normal();
  std::vector<double> y = decode(encode(x, plan, mel), plan, mel,
                                 static_cast<int64_t>(x.size()));
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (y[i] - x[i]) * (y[i] - x[i]);
    den += x[i] * x[i];
  }
  const double err = std::sqrt(num / den);
  return {"codec round trip on 1 s of noise", err < 1e-5,
          "rel err " + std::to_string(err)};
}

SelfTestItem check_sampler(Rng& rng) {
  NoiseShaper shaper = make_constant_shaper(1.0);
  Stack sources = random_stack(2, 256, rng);
  const uint64_t seed = rng.next_u64();
  Rng pair_rng(seed);
  FlowPair pair = make_flow_pair(sources, shaper, pair_rng);
  DriftFn oracle = [&](double, const Stack&, const std::vector<double>&) {
    return target(pair);
  };
  Rng sep_rng(seed);
  Stack out = separate(oracle, mix(sources), 2, shaper, make_single_schedule(),
                       sep_rng);
  double worst = 0.0;
  for (size_t i = 0; i < out.data.size(); ++i)
    worst = std::max(worst, std::abs(out.data[i] - pair.x1.data[i]));

  // mixture consistency of an arbitrary wrapped drift after 25 steps
  DriftFn drift = wrapped([](double t, const Stack& x, const std::vector<double>&) {
    Stack r = x;
    for (auto& v : r.data) v = std::sin(v) + 0.2 * t;
    return r;
  });
  Rng rng2(seed + 1);
  Stack est = separate(drift, mix(sources), 2, shaper, make_linear_schedule(25),
                       rng2);
  Stack pm = project_mean(est);
  const Stack cond = mean_stack_from_mixture(mix(sources), 2);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < pm.data.size(); ++i) {
    num += (pm.data[i] - cond.data[i]) * (pm.data[i] - cond.data[i]);
    den += cond.data[i] * cond.data[i];
  }
  const double slice = std::sqrt(num / den);
  return {"sampler: single-step oracle exactness and mixture consistency",
          worst < 1e-12 && slice < 1e-6,
          "oracle err " + std::to_string(worst) + ", slice err " +
              std::to_string(slice)};
}

SelfTestItem check_time_sampling() {
  const double t0 = snr_to_t(0.0);
  const double t20 = snr_to_t(20.0);
  const bool ok =
      std::abs(t0 - 0.5) < 1e-15 && std::abs(t20 - 10.0 / 11.0) < 1e-15;
  return {"time sampling: t(r=0) = 1/2 and t(r=20) = 10/11", ok,
          "t(0) = " + std::to_string(t0) + ", t(20) = " + std::to_string(t20)};
}

}  // namespace

SelfTestReport run_selftest(uint64_t seed, std::ostream* out) {
  Rng rng(seed);
  SelfTestReport report;
  report.items.push_back(check_projectors(rng));
  report.items.push_back(check_equivariance(rng));
  report.items.push_back(check_pit_oracle(rng));
  report.items.push_back(check_gradients(rng));
  report.items.push_back(check_codec(rng));
  report.items.push_back(check_sampler(rng));
  report.items.push_back(check_time_sampling());
  if (out) {
    for (const auto& it : report.items)
      *out << (it.ok ? "[ ok ] " : "[FAIL] ") << it.name << " (" << it.detail
           << ")\n";
    *out << (report.all_ok() ? "selftest: all checks passed\n"
                             : "selftest: FAILURES detected\n");
  }
  return report;
}

}  // namespace floss
