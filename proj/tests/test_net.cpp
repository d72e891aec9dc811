// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "floss/losses.hpp"
#include "floss/net.hpp"

using namespace floss;

namespace {
NetConfig tiny_config() {
  NetConfig cfg;
  cfg.n_blocks = 1;
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.n_bands = 4;
  cfg.norm_groups = 4;
  cfg.time_embed_dim = 8;
  cfg.time_hidden = 16;
  cfg.mlp_mult = 2;
  return cfg;
}

Stack random_stack(int64_t k, int64_t l, uint64_t seed) {
  Rng rng(seed);
  Stack s(k, l);
  for (auto& x : s.data) x = rng.normal();
  return s;
}

std::vector<double> random_signal(int64_t l, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(static_cast<size_t>(l));
  for (auto& v : x) v = rng.normal();
  return x;
}

// Kick every parameter (including the zero-initialized output projections)
// so the network is a generic function of its inputs.
void randomize(VelocityNet& net, uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  for (auto& [name, v] : net.params())
    for (auto& x : v->val.v) x += scale * rng.normal();
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

constexpr int64_t kLen = 512;
}  // namespace

TEST_CASE("config validation") {
  NetConfig cfg = tiny_config();
  CHECK_NOTHROW(validate_net_config(cfg));
  cfg.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(validate_net_config(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.time_embed_dim = 7;
  CHECK_THROWS_AS(validate_net_config(cfg), std::invalid_argument);
}

TEST_CASE("fresh net: correct shape, finite output, zero on zero input") {
  VelocityNet net(tiny_config(), 1);
  Stack x(2, kLen);  // zero input
  std::vector<double> cond(kLen, 0.0);
  Stack out = net.forward_stack(0.5, x, cond);
  CHECK(out.k == 2);
  CHECK(out.l == kLen);
  // zero encodings, zero head bias: the output is exactly zero
  for (double v : out.data) CHECK(v == 0.0);

  // nonzero input: finite and not identically zero (the head starts random
  // so the decoder sits away from the decompression's flat point)
  Stack xr = random_stack(2, kLen, 2);
  Stack out2 = net.forward_stack(0.1, xr, random_signal(kLen, 3));
  double m = 0.0;
  for (double v : out2.data) {
    CHECK(std::isfinite(v));
    m = std::max(m, std::abs(v));
  }
  CHECK(m > 0.0);
}

TEST_CASE("zero-initialized blocks are exact identities") {
  // Two nets sharing the same decoder head, one with a (BSJA, TSPA) pair and
  // one with no blocks at all: at init the blocks are pure residuals, so the
  // outputs must coincide. The marker embedding only touches the mixture
  // token, whose decoder output is dropped.
  NetConfig with_blocks = tiny_config();
  NetConfig no_blocks = tiny_config();
  no_blocks.n_blocks = 0;
  VelocityNet a(with_blocks, 5), bnet(no_blocks, 5);
  Rng rng(6);
  for (auto& [name, v] : a.params())
    if (name == "head.w" || name == "head.b")
      for (auto& x : v->val.v) x = 0.1 * rng.normal();
  for (auto& [name, v] : bnet.params())
    for (const auto& [an, av] : a.params())
      if (an == name && (name == "head.w" || name == "head.b")) v->val = av->val;

  Stack x = random_stack(2, kLen, 7);
  std::vector<double> cond = random_signal(kLen, 8);
  Stack oa = a.forward_stack(0.3, x, cond);
  Stack ob = bnet.forward_stack(0.3, x, cond);
  CHECK(rel_diff(oa.data, ob.data) < 1e-12);
  // and the output is genuinely nonzero here
  CHECK(*std::max_element(oa.data.begin(), oa.data.end()) > 0.0);
}

TEST_CASE("permutation equivariance for K in {2,3,4}, all permutations") {
  VelocityNet net(tiny_config(), 10);
  randomize(net, 11);
  std::vector<double> cond = random_signal(kLen, 12);
  for (int64_t k : {2, 3, 4}) {
    Stack x = random_stack(k, kLen, 20 + static_cast<uint64_t>(k));
    Stack base = net.forward_stack(0.35, x, cond);
    std::vector<int> perm(static_cast<size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      Stack px = permute_rows(x, perm);
      Stack out = net.forward_stack(0.35, px, cond);
      Stack expect = permute_rows(base, perm);
      CHECK(rel_diff(out.data, expect.data) < 1e-10);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("mixture token is distinguished from source tokens") {
  VelocityNet net(tiny_config(), 30);
  randomize(net, 31);
  std::vector<double> c = random_signal(kLen, 32);
  Stack x = random_stack(2, kLen, 33);
  // swap the roles of source 1 and the mixture token
  Stack swapped(2, kLen);
  for (int64_t i = 0; i < kLen; ++i) {
    swapped.at(0, i) = x.at(0, i);
    swapped.at(1, i) = c[static_cast<size_t>(i)];
  }
  std::vector<double> c2(static_cast<size_t>(kLen));
  for (int64_t i = 0; i < kLen; ++i) c2[static_cast<size_t>(i)] = x.at(1, i);

  Stack a = net.forward_stack(0.5, x, c);
  Stack b = net.forward_stack(0.5, swapped, c2);
  // shared first token, but its output must differ across the two calls
  std::vector<double> row0a(a.data.begin(), a.data.begin() + kLen);
  std::vector<double> row0b(b.data.begin(), b.data.begin() + kLen);
  CHECK(rel_diff(row0a, row0b) > 1e-6);
}

TEST_CASE("time conditioning: equal t agree, t=0 vs t=1 differ") {
  VelocityNet net(tiny_config(), 40);
  randomize(net, 41);
  Stack x = random_stack(2, kLen, 42);
  std::vector<double> cond = random_signal(kLen, 43);
  Stack t0a = net.forward_stack(0.0, x, cond);
  Stack t0b = net.forward_stack(0.0, x, cond);
  CHECK(t0a.data == t0b.data);  // bit-identical repeat
  Stack t1 = net.forward_stack(1.0, x, cond);
  CHECK(rel_diff(t0a.data, t1.data) > 1e-8);
}

TEST_CASE("determinism: same seed gives bit-identical nets and outputs") {
  VelocityNet a(tiny_config(), 50), b(tiny_config(), 50);
  REQUIRE(a.params().size() == b.params().size());
  for (size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].second->val.v == b.params()[i].second->val.v);
  Stack x = random_stack(2, kLen, 51);
  std::vector<double> cond = random_signal(kLen, 52);
  randomize(a, 53);
  randomize(b, 53);
  CHECK(a.forward_stack(0.4, x, cond).data == b.forward_stack(0.4, x, cond).data);
}

TEST_CASE("drift composed with wrap_drift has zero column sums") {
  VelocityNet net(tiny_config(), 60);
  randomize(net, 61);
  Stack x = random_stack(3, kLen, 62);
  std::vector<double> cond = random_signal(kLen, 63);
  Stack v = wrap_drift(net.raw_fn(), 0.25, x, cond);
  for (double col : mix(v)) CHECK(std::abs(col) < 1e-9);
}

TEST_CASE("end-to-end loss gradient passes finite differences") {
  VelocityNet net(tiny_config(), 70);
  randomize(net, 71);

  Rng rng(72);
  NoiseShaper shaper = make_constant_shaper(1.0);
  FlowPair pair = make_flow_pair(random_stack(2, kLen, 73), shaper, rng);
  const Permutation perm = {1, 0};
  const double t = 0.3;
  const double denom = target_norm2(pair);
  Stack p1 = permute_rows(pair.x1, perm);
  Stack ptarget(2, kLen);
  for (size_t i = 0; i < ptarget.data.size(); ++i)
    ptarget.data[i] = p1.data[i] - pair.x0.data[i];
  Stack xt(2, kLen);
  for (size_t i = 0; i < xt.data.size(); ++i)
    xt.data[i] = t * p1.data[i] + (1.0 - t) * pair.x0.data[i];
  Stack xt_perp = project_perp(xt);
  const std::vector<double> cond = cond_row(pair);

  auto loss_value_now = [&]() {
    ad::Var pred = net.forward(t, xt_perp, cond);
    ad::Var loss = loss_graph(pred, ptarget, denom, LossKind::kRaw);
    return loss;
  };

  // analytic gradients
  ad::Var loss = loss_value_now();
  ad::backward(loss);

  // Central differences on a spread of parameters, a few coordinates each.
  // The loss is O(10^3) here, so h = 1e-5 would leave only ~1e-8 absolute
  // resolution after cancellation; 1e-4 keeps roundoff below the tolerance.
  const double h = 1e-4;
  double max_rel = 0.0;
  for (const std::string name :
       {"marker", "time.w1", "block0.norm1.gain", "block0.attn.wq",
        "block0.attn.wo", "block0.mlp.w_gate", "block1.attn.wv",
        "block1.mlp.w_out", "block1.norm2.mod", "head.w", "head.b"}) {
    ad::Var p;
    for (auto& [n, v] : net.params())
      if (n == name) p = v;
    REQUIRE(p != nullptr);
    const int64_t stride = std::max<int64_t>(1, p->val.numel() / 3);
    for (int64_t idx = 0; idx < p->val.numel(); idx += stride) {
      const double saved = p->val.v[idx];
      p->val.v[idx] = saved + h;
      const double up = loss_value_now()->val.v[0];
      p->val.v[idx] = saved - h;
      const double dn = loss_value_now()->val.v[0];
      p->val.v[idx] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double an = p->grad.v[idx];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("EMA tracking and checkpoint round trip") {
  VelocityNet net(tiny_config(), 80);
  randomize(net, 81);
  net.ema_reset();
  // drift the parameters and track them
  for (auto& [name, v] : net.params())
    for (auto& x : v->val.v) x += 0.01;
  net.ema_update(0.999);
  // ema = 0.999 * old + 0.001 * new = old + 0.001 * 0.01
  const double expect_delta = 0.001 * 0.01;
  const Tensor& marker_ema = find_tensor(net.ema(), "marker");
  double marker_now = 0.0;
  for (auto& [name, v] : net.params())
    if (name == "marker") marker_now = v->val.v[0];
  CHECK(marker_ema.v[0] ==
        doctest::Approx(marker_now - 0.01 + expect_delta).epsilon(1e-12));

  const std::string path = "net_roundtrip.ckpt";
  net.save(path);
  VelocityNet loaded = VelocityNet::load(path);
  REQUIRE(loaded.params().size() == net.params().size());
  for (size_t i = 0; i < net.params().size(); ++i) {
    CHECK(loaded.params()[i].first == net.params()[i].first);
    CHECK(loaded.params()[i].second->val.v == net.params()[i].second->val.v);
  }
  for (size_t i = 0; i < net.ema().size(); ++i)
    CHECK(loaded.ema()[i].second.v == net.ema()[i].second.v);

  Stack x = random_stack(2, kLen, 82);
  std::vector<double> cond = random_signal(kLen, 83);
  CHECK(loaded.forward_stack(0.6, x, cond).data ==
        net.forward_stack(0.6, x, cond).data);
  CHECK(loaded.forward_stack(0.6, x, cond, /*use_ema=*/true).data ==
        net.forward_stack(0.6, x, cond, /*use_ema=*/true).data);
  std::remove(path.c_str());

  CHECK_THROWS_AS(VelocityNet::load("missing_file.ckpt"), std::runtime_error);
}

TEST_CASE("checkpoint format: round trip and corruption detection") {
  NamedTensorList tensors;
  Tensor a({2, 3});
  a.v = {1, 2, 3, 4, 5, 6};
  tensors.emplace_back("a", a);
  Tensor b({4});
  b.v = {-1.5, 0.0, 2.25, 1e300};
  tensors.emplace_back("deep/nested.name", b);
  const std::string path = "ckpt_format.bin";
  save_checkpoint(path, tensors);
  NamedTensorList back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "a");
  CHECK(back[0].second.shape == a.shape);
  CHECK(back[0].second.v == a.v);
  CHECK(back[1].second.v == b.v);
  CHECK(find_tensor(back, "a").v == a.v);
  CHECK_THROWS_AS(find_tensor(back, "zzz"), std::runtime_error);

  // corrupt the magic
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("time_features is deterministic and separates endpoints") {
  auto f0 = time_features(0.0, 8);
  auto f0b = time_features(0.0, 8);
  CHECK(f0 == f0b);
  auto f1 = time_features(1.0, 8);
  CHECK(rel_diff(f0, f1) > 1e-3);
  // cos components are 1 at t = 0
  CHECK(f0[1] == 1.0);
  CHECK(f0[0] == 0.0);
}
