#pragma once

// Flat key=value run configuration. Blank lines and lines starting with '#'
// are ignored. Unknown keys are rejected.

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>

#include "fixpoint/trainer.hpp"

namespace fixpoint {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class KeyValueConfig {
 public:
  explicit KeyValueConfig(std::set<std::string> allowed_keys);

  void parse(std::istream& in);
  void load(const std::filesystem::path& path);

  /// Sets or overrides one key. Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sorted key=value lines.
  void write(std::ostream& out) const;

 private:
  std::set<std::string> allowed_;
  std::map<std::string, std::string> values_;
};

/// Keys understood by train_config_from().
const std::set<std::string>& train_config_keys();

/// Applies every present key on top of the defaults in `base`.
TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base = {});

/// Fully resolved key=value form of a TrainConfig.
KeyValueConfig to_key_values(const TrainConfig& config);

}  // namespace fixpoint
