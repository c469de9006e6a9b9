#pragma once

// key=value configuration text, shared by config files and checkpoints.
// Blank lines and lines starting with '#' are ignored.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace sinet {

class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, std::size_t value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, double value);
  void set(const std::string& key, const std::vector<std::size_t>& value);

  // Typed reads; ConfigError on a malformed value. The fallback overloads
  // return `fallback` when the key is absent.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const ConfigMap&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace sinet
