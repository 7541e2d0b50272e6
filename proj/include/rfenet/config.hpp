#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rfenet/losses.hpp"
#include "rfenet/network.hpp"
#include "rfenet/synthdata.hpp"

namespace rfenet {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Every recognized key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` configuration. Only keys from config_keys() are
/// accepted; later assignments win.
class Config {
 public:
  Config();

  static Config from_file(const std::filesystem::path& path);

  /// Parses `key = value` lines; `#` starts a comment.
  void parse(const std::string& text, const std::string& origin = "<text>");
  void set(const std::string& key, const std::string& value);
  /// Applies `key=value` strings in order.
  void apply_overrides(const std::vector<std::string>& assignments);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Canonical text form (all keys, documentation order).
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

NetworkConfig network_config(const Config& cfg);
DatasetSpec dataset_spec(const Config& cfg);
LossConfig loss_config(const Config& cfg);

}  // namespace rfenet
