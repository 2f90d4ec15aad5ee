#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgo {

// Raised for malformed or inconsistent configuration; carries the dotted
// key path at fault.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), key(path) {}
  std::string key;
};

// Flat "key = value" text with dotted keys. '#' starts a comment. Lists
// are comma separated, optionally in brackets; "1 0 0; 1 1 0" is a list
// of integer triples.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<text>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  const std::string& raw(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;
  // "a b c; d e f" -> {{a,b,c},{d,e,f}}
  std::vector<std::vector<double>> get_rows(const std::string& key) const;

  // Keys under "prefix." with the prefix stripped.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  // Sorted "key = value" lines; the hash is FNV-1a 64 of this text.
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& text);
std::string hex64(std::uint64_t v);

}  // namespace cgo
