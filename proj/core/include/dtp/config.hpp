#pragma once

#include <map>
#include <string>
#include <vector>

#include "dtp/train.hpp"

namespace dtp {

// Key-value view of a TOML-style run configuration: `key = value` lines,
// `#` comments, `[section]` headers that prefix later keys with "section.",
// values = quoted strings, bare numbers/booleans, or single-line arrays.
// Arrays are stored element-wise; scalars are one-element entries.
struct ConfigMap {
  std::map<std::string, std::vector<std::string>> entries;

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  // typed accessors: throw std::invalid_argument naming the key on a missing
  // entry (no fallback), a non-scalar entry, or an unparseable token
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_array(const std::string& key) const;  // empty if absent
};

ConfigMap parse_config_text(const std::string& text);   // throws with line numbers
ConfigMap parse_config_file(const std::string& path);   // throws if unreadable

// `--set key=value` override; value uses the same grammar as a file entry.
void apply_override(ConfigMap& cfg, const std::string& assignment);

// Builds a run configuration from documented keys (README lists them all);
// unknown keys throw so typos cannot silently fall back to defaults.
// Dataset entries are "name:path" or "name:path:multiplier" strings under
// the `datasets` array.
TrainConfig train_config_from(const ConfigMap& cfg);

DatasetRef parse_dataset_ref(const std::string& entry);

}  // namespace dtp
