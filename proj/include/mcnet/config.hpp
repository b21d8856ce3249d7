#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcnet/implicit_layer.hpp"
#include "mcnet/measurement.hpp"
#include "mcnet/training.hpp"

namespace mcnet::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Documented configuration key with its default ("" means unset).
struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every key the commands read. Unknown keys in a file are rejected.
const std::vector<ConfigKey>& known_keys();

/// Flat key-value run configuration.
///
/// File syntax: one `key = value` per line, `#` starts a comment, blank lines
/// are ignored. Relative paths resolve against the directory of the file.
/// An environment variable MCNET_<KEY> (upper case) overrides the file, and
/// explicit set() calls (command-line flags) override both.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::istream& in, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& file);

  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
  /// Applies MCNET_<KEY> overrides for every known key.
  void apply_env(const EnvLookup& lookup);
  void apply_process_env();

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  /// Resolved against the config file directory; throws if unset.
  std::filesystem::path get_path(const std::string& key) const;
  std::optional<std::filesystem::path> find_path(const std::string& key) const;

  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  // Typed views used by the commands.
  int scale() const;  // validated to {2, 3, 4}
  double epsilon() const;
  std::uint64_t seed() const;
  measurement::OperatorSpec operator_spec() const;
  layer::LayerConfig layer_config() const;
  training::PretrainConfig pretrain_config() const;
  training::TrainConfig train_config() const;

  /// Checks scale, epsilon and that every numeric key parses.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_ = ".";
};

}  // namespace mcnet::cli
