#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mcf/network.hpp"
#include "mcf/synthetic.hpp"
#include "mcf/train_loop.hpp"

namespace mcf {

/// Raised for keys outside the schema; key() names the offender.
class UnknownKeyError : public ConfigError {
 public:
  explicit UnknownKeyError(const std::string& key)
      : ConfigError("unknown config key: " + key), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat `key = value` settings. Lines are `key = value`, `#` starts a comment.
/// Every key is checked against a fixed schema; values are validated on
/// access and when converting to typed configs.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text, const std::string& origin = "<string>");

  /// Applies one `key=value` override.
  void set(const std::string& key, const std::string& value);
  void set_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  /// Applies MCF_SEED from the environment, if set.
  void apply_environment();

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SynthDatasetSpec synth_spec() const;

  /// All settings, one `key = value` per line, sorted by key.
  std::string to_string() const;

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mcf
