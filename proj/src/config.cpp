// Copyright 2026 the floss authors
// SPDX-License-Identifier: Apache-2.0

#include "floss/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace floss {

namespace {
std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_num(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value '" + value +
                                "' for " + key);
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  const double v = parse_num(key, value);
  const auto i = static_cast<int64_t>(v);
  if (static_cast<double>(i) != v)
    throw std::invalid_argument("config: expected an integer for " + key +
                                ", got '" + value + "'");
  return i;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + value + "' for " + key);
}
}  // namespace

KvList parse_config_text(const std::string& text) {
  KvList kv;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section at line " +
                                    std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || section.empty())
      throw std::invalid_argument("config: key outside a section at line " +
                                  std::to_string(line_no));
    kv.emplace_back(section + "." + key, value);
  }
  return kv;
}

KvList read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void add_override(KvList& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw std::invalid_argument("config: override must look like section.key=value, got '" +
                                assignment + "'");
  kv.emplace_back(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig make_run_config(const KvList& kv) {
  RunConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "data.sample_rate") cfg.sample_rate = static_cast<int>(parse_int(key, value));
    else if (key == "data.crop_seconds") cfg.crop_seconds = parse_num(key, value);
    else if (key == "data.n_sources") cfg.n_sources = parse_int(key, value);
    else if (key == "data.level_min_db") cfg.level_min_db = parse_num(key, value);
    else if (key == "data.level_max_db") cfg.level_max_db = parse_num(key, value);
    else if (key == "data.snr_min_db") cfg.snr_min_db = parse_num(key, value);
    else if (key == "data.snr_max_db") cfg.snr_max_db = parse_num(key, value);
    else if (key == "data.source_kind") cfg.source_kind = value;
    else if (key == "data.eval_examples") cfg.eval_examples = parse_int(key, value);
    else if (key == "model.n_blocks") cfg.net.n_blocks = parse_int(key, value);
    else if (key == "model.embed_dim") cfg.net.embed_dim = parse_int(key, value);
    else if (key == "model.n_heads") cfg.net.n_heads = parse_int(key, value);
    else if (key == "model.n_bands") cfg.net.n_bands = parse_int(key, value);
    else if (key == "model.norm_groups") cfg.net.norm_groups = parse_int(key, value);
    else if (key == "model.time_embed_dim") cfg.net.time_embed_dim = parse_int(key, value);
    else if (key == "model.time_hidden") cfg.net.time_hidden = parse_int(key, value);
    else if (key == "model.mlp_mult") cfg.net.mlp_mult = parse_int(key, value);
    else if (key == "loss.loss") cfg.loss = parse_loss_kind(value);
    else if (key == "loss.time_weighting") cfg.time_weighting = value;
    else if (key == "loss.p0") cfg.p0 = parse_num(key, value);
    else if (key == "loss.assignment") cfg.assignment = value;
    else if (key == "noise.noise") cfg.noise = value;
    else if (key == "noise.sigma0") cfg.sigma0 = parse_num(key, value);
    else if (key == "noise.env_window_ms") cfg.env_window_ms = parse_num(key, value);
    else if (key == "noise.env_threshold_db") cfg.env_threshold_db = parse_num(key, value);
    else if (key == "train.steps") cfg.steps = parse_int(key, value);
    else if (key == "train.batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "train.lr_peak") cfg.lr_peak = parse_num(key, value);
    else if (key == "train.warmup_frac") cfg.warmup_frac = parse_num(key, value);
    else if (key == "train.weight_decay") cfg.weight_decay = parse_num(key, value);
    else if (key == "train.ema_decay") cfg.ema_decay = parse_num(key, value);
    else if (key == "train.clip_norm") cfg.clip_norm = parse_num(key, value);
    else if (key == "train.seed") cfg.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "sample.schedule") cfg.schedule = value;
    else if (key == "sample.use_ema") cfg.use_ema = parse_bool(key, value);
    else if (key == "sample.seed") cfg.sample_seed = static_cast<uint64_t>(parse_int(key, value));
    else
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  // cross-field consistency
  cfg.net.stft.sample_rate = cfg.sample_rate;
  if (cfg.sample_rate <= 0) throw std::invalid_argument("config: sample_rate must be positive");
  cfg.net.stft.frame_len = cfg.sample_rate / 50;  // 20 ms
  cfg.net.stft.hop = cfg.net.stft.frame_len / 2;
  if (cfg.crop_seconds <= 0.0) throw std::invalid_argument("config: crop_seconds must be positive");
  if (cfg.n_sources < 2) throw std::invalid_argument("config: n_sources must be >= 2");
  if (cfg.level_min_db > cfg.level_max_db)
    throw std::invalid_argument("config: level range is reversed");
  if (cfg.snr_min_db > cfg.snr_max_db)
    throw std::invalid_argument("config: snr range is reversed");
  if (cfg.eval_examples < 1) throw std::invalid_argument("config: eval_examples must be >= 1");
  if (cfg.steps < 1) throw std::invalid_argument("config: steps must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (cfg.warmup_frac < 0.0 || cfg.warmup_frac >= 1.0)
    throw std::invalid_argument("config: warmup_frac must lie in [0, 1)");
  if (cfg.ema_decay <= 0.0 || cfg.ema_decay >= 1.0)
    throw std::invalid_argument("config: ema_decay must lie in (0, 1)");
  if (cfg.clip_norm <= 0.0) throw std::invalid_argument("config: clip_norm must be positive");
  if (cfg.noise != "constant" && cfg.noise != "active_power" && cfg.noise != "envelope")
    throw std::invalid_argument("config: noise must be constant|active_power|envelope");
  if (cfg.assignment != "pit" && cfg.assignment != "euclidean")
    throw std::invalid_argument("config: assignment must be pit|euclidean");
  validate_net_config(cfg.net);
  cfg.weighting();            // validates kind and p0
  parse_loss_kind(loss_kind_name(cfg.loss));
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return make_run_config(read_config_file(path));
}

}  // namespace floss
