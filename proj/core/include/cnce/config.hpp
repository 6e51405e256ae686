#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnce {

/// Configuration error naming the offending key (empty when not key-specific).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat `key = value` experiment configuration.
///
/// Every key has a registered default; setting or reading an unregistered
/// key is an error. Values are kept as text and parsed on access. Lists are
/// comma separated.
class ExperimentConfig {
 public:
  /// All registered keys at their defaults.
  static ExperimentConfig defaults();

  /// Defaults overridden by the `key = value` lines of `in`. Blank lines and
  /// `#` comments are ignored.
  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::vector<std::string> texts(const std::string& key) const;

  /// Every key in sorted order, one `key = value` per line.
  std::string resolved() const;
  /// FNV-1a 64 of resolved(), as 16 hex digits.
  std::string hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cnce
