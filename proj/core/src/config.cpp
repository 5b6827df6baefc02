#include "dtp/config.hpp"

#include "dtp/text.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dtp {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

void skip_ws(const std::string& s, size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

// one token: quoted string (escapes \" and \\) or a bare word up to a
// delimiter; returns the decoded value
std::string parse_token(const std::string& s, size_t& i, int line) {
  if (i < s.size() && s[i] == '"') {
    std::string out;
    ++i;
    while (i < s.size() && s[i] != '"') {
      if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == '"' || s[i + 1] == '\\')) ++i;
      out += s[i++];
    }
    if (i >= s.size()) fail(line, "unterminated string");
    ++i;
    return out;
  }
  size_t start = i;
  while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' && s[i] != '\t')
    ++i;
  if (i == start) fail(line, "expected a value");
  return s.substr(start, i - start);
}

std::vector<std::string> parse_value(const std::string& s, size_t& i, int line) {
  skip_ws(s, i);
  if (i >= s.size() || s[i] == '#') fail(line, "missing value after '='");
  std::vector<std::string> out;
  if (s[i] == '[') {
    ++i;
    for (;;) {
      skip_ws(s, i);
      if (i >= s.size()) fail(line, "unterminated array");
      if (s[i] == ']') {
        ++i;
        break;
      }
      out.push_back(parse_token(s, i, line));
      skip_ws(s, i);
      if (i < s.size() && s[i] == ',') {
        ++i;
        continue;
      }
      if (i < s.size() && s[i] == ']') {
        ++i;
        break;
      }
      fail(line, "expected ',' or ']' in array");
    }
  } else {
    out.push_back(parse_token(s, i, line));
  }
  skip_ws(s, i);
  if (i < s.size() && s[i] != '#') fail(line, "trailing characters after value");
  return out;
}

const std::vector<std::string>& scalar(const ConfigMap& cfg, const std::string& key) {
  auto it = cfg.entries.find(key);
  if (it == cfg.entries.end()) throw std::invalid_argument("missing config key: " + key);
  if (it->second.size() != 1)
    throw std::invalid_argument("config key is an array, expected a scalar: " + key);
  return it->second;
}

}  // namespace

std::string ConfigMap::get_string(const std::string& key) const { return scalar(*this, key)[0]; }

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& t = scalar(*this, key)[0];
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(t, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != t.size()) throw std::invalid_argument("config key " + key + ": not an integer: " + t);
  return v;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& t = scalar(*this, key)[0];
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != t.size()) throw std::invalid_argument("config key " + key + ": not a number: " + t);
  return v;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& t = scalar(*this, key)[0];
  if (t == "true") return true;
  if (t == "false") return false;
  throw std::invalid_argument("config key " + key + ": expected true or false, got: " + t);
}

std::vector<std::string> ConfigMap::get_array(const std::string& key) const {
  auto it = entries.find(key);
  return it == entries.end() ? std::vector<std::string>{} : it->second;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t i = 0;
    skip_ws(line, i);
    if (i >= line.size() || line[i] == '#') continue;
    if (line[i] == '[') {
      size_t close = line.find(']', i);
      if (close == std::string::npos) fail(lineno, "unterminated section header");
      section = line.substr(i + 1, close - i - 1);
      if (section.empty()) fail(lineno, "empty section name");
      for (char c : section)
        if (!is_key_char(c)) fail(lineno, "bad section name: " + section);
      i = close + 1;
      skip_ws(line, i);
      if (i < line.size() && line[i] != '#') fail(lineno, "trailing characters after section");
      continue;
    }
    size_t kstart = i;
    while (i < line.size() && is_key_char(line[i])) ++i;
    if (i == kstart) fail(lineno, "expected a key");
    std::string key = line.substr(kstart, i - kstart);
    skip_ws(line, i);
    if (i >= line.size() || line[i] != '=') fail(lineno, "expected '=' after key " + key);
    ++i;
    if (!section.empty()) key = section + "." + key;
    if (cfg.entries.count(key)) fail(lineno, "duplicate key: " + key);
    cfg.entries[key] = parse_value(line, i, lineno);
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(ConfigMap& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  for (char c : key)
    if (!is_key_char(c)) throw std::invalid_argument("bad override key: " + key);
  size_t i = eq + 1;
  cfg.entries[key] = parse_value(assignment, i, 0);
}

DatasetRef parse_dataset_ref(const std::string& entry) {
  DatasetRef ref;
  const size_t first = entry.find(':');
  if (first == std::string::npos || first == 0)
    throw std::invalid_argument("dataset entry must be name:path[:multiplier]: " + entry);
  ref.name = entry.substr(0, first);
  std::string rest = entry.substr(first + 1);
  const size_t last = rest.rfind(':');
  if (last != std::string::npos) {
    const std::string tail = rest.substr(last + 1);
    size_t pos = 0;
    double mult = 0.0;
    bool ok = true;
    try {
      mult = std::stod(tail, &pos);
    } catch (const std::exception&) {
      ok = false;
    }
    if (ok && pos == tail.size()) {
      ref.multiplier = mult;
      rest = rest.substr(0, last);
    }  // otherwise the colon belongs to the path
  }
  if (rest.empty()) throw std::invalid_argument("dataset entry has an empty path: " + entry);
  ref.path = rest;
  return ref;
}

TrainConfig train_config_from(const ConfigMap& cfg) {
  static const std::set<std::string> known = {
      "phase", "batch_size", "lr", "warmup_steps", "beta1", "beta2", "weight_decay",
      "adam_eps", "total_steps", "seed", "out_dir", "init_checkpoint", "checkpoint_every",
      "monitor_every", "monitor_windows", "monitor_sample_steps", "mask_p", "snr_db",
      "brightness_jitter", "producers", "datasets",
      "model.layers", "model.d_model", "model.heads", "model.t_a", "model.vocab",
      "model.lang_embed", "model.image_size", "model.patch", "model.t_img", "model.views",
      "model.bands", "model.c_max", "model.k_max", "model.no_qknorm_rmsnorm",
      "model.no_mlp_decoder", "model.no_aci", "model.regress"};
  for (const auto& kv : cfg.entries)
    if (!known.count(kv.first)) throw std::invalid_argument("unknown config key: " + kv.first);

  TrainConfig tc;
  tc.phase = cfg.get_string("phase", tc.phase);
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", tc.batch_size));
  tc.lr = cfg.get_double("lr", tc.lr);
  tc.warmup_steps = static_cast<int>(cfg.get_int("warmup_steps", tc.warmup_steps));
  tc.beta1 = cfg.get_double("beta1", tc.beta1);
  tc.beta2 = cfg.get_double("beta2", tc.beta2);
  tc.weight_decay = cfg.get_double("weight_decay", tc.weight_decay);
  tc.adam_eps = cfg.get_double("adam_eps", tc.adam_eps);
  tc.total_steps = static_cast<int>(cfg.get_int("total_steps", tc.total_steps));
  tc.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int64_t>(tc.seed)));
  tc.out_dir = cfg.get_string("out_dir", tc.out_dir);
  tc.init_checkpoint = cfg.get_string("init_checkpoint", tc.init_checkpoint);
  tc.checkpoint_every = static_cast<int>(cfg.get_int("checkpoint_every", tc.checkpoint_every));
  tc.monitor_every = static_cast<int>(cfg.get_int("monitor_every", tc.monitor_every));
  tc.monitor_windows = static_cast<int>(cfg.get_int("monitor_windows", tc.monitor_windows));
  tc.monitor_sample_steps =
      static_cast<int>(cfg.get_int("monitor_sample_steps", tc.monitor_sample_steps));
  tc.mask_p = cfg.get_double("mask_p", tc.mask_p);
  tc.snr_db = cfg.get_double("snr_db", tc.snr_db);
  tc.brightness_jitter = cfg.get_double("brightness_jitter", tc.brightness_jitter);
  tc.producers = static_cast<int>(cfg.get_int("producers", tc.producers));
  for (const std::string& d : cfg.get_array("datasets")) tc.datasets.push_back(parse_dataset_ref(d));

  ModelConfig& m = tc.model;
  m.layers = static_cast<int>(cfg.get_int("model.layers", m.layers));
  m.d_model = static_cast<int>(cfg.get_int("model.d_model", m.d_model));
  m.heads = static_cast<int>(cfg.get_int("model.heads", m.heads));
  m.t_a = static_cast<int>(cfg.get_int("model.t_a", m.t_a));
  // the training stack always tokenizes with the built-in vocabulary, so an
  // unset size defaults to it rather than forcing the caller to know the count
  m.vocab = static_cast<int>(cfg.get_int(
      "model.vocab", m.vocab > 0 ? m.vocab : static_cast<int>(builtin_vocabulary().size())));
  m.lang_embed = static_cast<int>(cfg.get_int("model.lang_embed", m.lang_embed));
  m.image_size = static_cast<int>(cfg.get_int("model.image_size", m.image_size));
  m.patch = static_cast<int>(cfg.get_int("model.patch", m.patch));
  m.t_img = static_cast<int>(cfg.get_int("model.t_img", m.t_img));
  m.views = static_cast<int>(cfg.get_int("model.views", m.views));
  m.bands = static_cast<int>(cfg.get_int("model.bands", m.bands));
  m.c_max = cfg.get_double("model.c_max", m.c_max);
  m.k_max = static_cast<int>(cfg.get_int("model.k_max", m.k_max));
  m.no_qknorm_rmsnorm = cfg.get_bool("model.no_qknorm_rmsnorm", m.no_qknorm_rmsnorm);
  m.no_mlp_decoder = cfg.get_bool("model.no_mlp_decoder", m.no_mlp_decoder);
  m.no_aci = cfg.get_bool("model.no_aci", m.no_aci);
  m.regress = cfg.get_bool("model.regress", m.regress);
  return tc;
}

}  // namespace dtp
