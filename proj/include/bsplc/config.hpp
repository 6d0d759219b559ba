#pragma once

// Flat `key = value` configuration files. Blank lines and `#` comments are
// ignored; a malformed line or an unknown key is reported with its line number.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsplc/generator.hpp"

namespace bsplc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigFile {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
    mutable bool used = false;
  };

  static ConfigFile parse(const std::string& text, const std::string& source = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return find(key) != nullptr; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError for the first entry no getter has read.
  void reject_unused() const;
  const std::vector<Entry>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

 private:
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const Entry& e, const std::string& what) const;

  std::string source_;
  std::vector<Entry> entries_;
};

/// Reads `preset` first, then any per-field overrides.
GeneratorConfig generator_config_from(const ConfigFile& cfg);

}  // namespace bsplc
