#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "ttlift/common.hpp"

namespace ttlift {

/// Flat `key = value` settings. '#' starts a comment; blank lines are ignored.
using KvMap = std::map<std::string, std::string>;

/// Throws ConfigError on a malformed line or a duplicate key.
KvMap parse_kv(std::string_view text);
KvMap read_kv_file(const std::string& path);
/// Parses "key=value" (as given on the command line).
std::pair<std::string, std::string> parse_kv_assignment(std::string_view text);

/// Hands out values by key and remembers which ones were consumed, so that
/// leftovers can be reported as unknown.
class KvBinder {
public:
  explicit KvBinder(KvMap values) : values_(std::move(values)) {}

  void bind(const std::string& key, double& target);
  void bind(const std::string& key, int& target);
  void bind(const std::string& key, std::uint64_t& target);
  void bind(const std::string& key, bool& target);
  void bind(const std::string& key, std::string& target);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  /// Throws ConfigError naming the first key that no bind() call consumed.
  void reject_unknown() const;

private:
  const std::string* take(const std::string& key);

  KvMap values_;
  std::set<std::string> used_;
};

}  // namespace ttlift
