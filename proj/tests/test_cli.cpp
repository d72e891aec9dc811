// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end smoke tests for every CLI path. Each test drives the `floss`
// binary (expected next to the test executable) on a tiny configuration.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "floss/wav.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
  if (const char* env = std::getenv("FLOSS_BIN")) return env;
  return "./floss";
}

int run(const std::string& args) {
  const int status = std::system((binary() + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("floss_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string write_tiny_config(const TempDir& dir) {
  const std::string path = dir / "tiny.cfg";
  std::ofstream out(path);
  out << "[data]\nsample_rate = 8000\ncrop_seconds = 0.25\neval_examples = 2\n"
      << "[model]\nn_blocks = 1\nembed_dim = 8\nn_heads = 2\nn_bands = 4\n"
      << "time_embed_dim = 8\ntime_hidden = 16\nmlp_mult = 2\n"
      << "[train]\nsteps = 4\nbatch_size = 2\n"
      << "[sample]\nschedule = linear:4\n";
  return path;
}

}  // namespace

TEST_CASE("train + eval + separate round trip") {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  CHECK(run("train --config " + cfg + " --out " + (dir / "run")) == 0);
  CHECK(fs::exists(dir / "run/model.ckpt"));
  const std::string loss_csv = slurp(dir / "run/loss.csv");
  CHECK(loss_csv.rfind("step,loss,lr", 0) == 0);

  CHECK(run("eval --model " + (dir / "run/model.ckpt") + " --config " + cfg +
            " --out " + (dir / "metrics.csv")) == 0);
  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.rfind("id,perm,sisdr_src1,sisdr_src2,sisdr_mean,baseline_mean",
                      0) == 0);

  // a short mixture to separate
  floss::WavData mix;
  mix.sample_rate = 8000;
  mix.samples.resize(1600);
  for (size_t i = 0; i < mix.samples.size(); ++i)
    mix.samples[i] = 0.3 * std::sin(0.31 * static_cast<double>(i)) +
                     0.2 * std::sin(1.13 * static_cast<double>(i));
  floss::write_wav(dir / "mix.wav", mix);
  CHECK(run("separate --model " + (dir / "run/model.ckpt") + " --input " +
            (dir / "mix.wav") + " --out " + (dir / "sep") +
            " --schedule linear:4") == 0);
  CHECK(fs::exists(dir / "sep/mix_src1.wav"));
  CHECK(fs::exists(dir / "sep/mix_src2.wav"));
  // outputs are mixture consistent
  floss::WavData s1 = floss::read_wav(dir / "sep/mix_src1.wav");
  floss::WavData s2 = floss::read_wav(dir / "sep/mix_src2.wav");
  REQUIRE(s1.samples.size() == mix.samples.size());
  for (size_t i = 0; i < mix.samples.size(); ++i)
    CHECK(s1.samples[i] + s2.samples[i] ==
          doctest::Approx(mix.samples[i]).epsilon(1e-3).scale(1.0));
}

TEST_CASE("ablate over the loss axis emits a three-row table") {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  CHECK(run("ablate --config " + cfg + " --axes loss --out " +
            (dir / "abl.csv")) == 0);
  const std::string table = slurp(dir / "abl.csv");
  CHECK(table.rfind("loss,time_weighting,noise,schedule,assignment,"
                    "sisdr_mean,baseline_mean", 0) == 0);
  int rows = -1;  // skip the header
  for (char c : table)
    if (c == '\n') ++rows;
  CHECK(rows == 3);
  CHECK(table.find("\nraw,") != std::string::npos);
  CHECK(table.find("\nnormalized,") != std::string::npos);
  CHECK(table.find("\ndb,") != std::string::npos);

  // empty axes: a single-row table; oversized grids are refused
  CHECK(run("ablate --config " + cfg + " --out " + (dir / "one.csv")) == 0);
  rows = -1;
  for (char c : slurp(dir / "one.csv"))
    if (c == '\n') ++rows;
  CHECK(rows == 1);
  CHECK(run("ablate --config " + cfg +
            " --axes loss,time_weighting,noise,schedule --max-runs 10 --out " +
            (dir / "big.csv")) == 2);
}

TEST_CASE("selftest passes and is deterministic") {
  TempDir dir;
  const std::string a = dir / "a.txt";
  const std::string b = dir / "b.txt";
  CHECK(std::system((binary() + " selftest --seed 5 > " + a).c_str()) == 0);
  CHECK(std::system((binary() + " selftest --seed 5 > " + b).c_str()) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).find("all checks passed") != std::string::npos);
  CHECK(slurp(a).find("[FAIL]") == std::string::npos);
}

TEST_CASE("exit codes: config 2, numerical 3, I/O 4") {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  CHECK(run("train --set data.n_sources=1") == 2);           // invalid value
  CHECK(run("train --set data.no_such_key=1") == 2);         // unknown key
  CHECK(run("nonsense") == 2);                               // bad subcommand
  CHECK(run("eval --model " + (dir / "missing.ckpt") + " --config " + cfg) == 4);
  CHECK(run("train --config " + (dir / "missing.cfg")) == 4);

  // a checkpoint with a corrupted magic surfaces as a numerical/load failure
  CHECK(run("train --config " + cfg + " --out " + (dir / "run")) == 0);
  std::fstream ck(dir / "run/model.ckpt",
                  std::ios::in | std::ios::out | std::ios::binary);
  ck.write("XXXX", 4);
  ck.close();
  CHECK(run("eval --model " + (dir / "run/model.ckpt") + " --config " + cfg) == 3);
}

TEST_CASE("train determinism through the CLI: identical loss curves") {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  CHECK(run("train --config " + cfg + " --out " + (dir / "r1")) == 0);
  CHECK(run("train --config " + cfg + " --out " + (dir / "r2")) == 0);
  CHECK(slurp(dir / "r1/loss.csv") == slurp(dir / "r2/loss.csv"));
}
