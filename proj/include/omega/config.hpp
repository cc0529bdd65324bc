#pragma once

#include <string>
#include <vector>

#include "omega/tensor.hpp"

namespace omega {

// Ordered key=value configuration. Later set() calls overwrite earlier
// values, which implements the precedence defaults < config file < flags.
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  // Throws listing any key not in `allowed` (no silent typos).
  void require_known_keys(const std::vector<std::string>& allowed) const;

  std::string serialize() const;
  void write_lock(const std::string& out_dir) const;  // <out_dir>/run.lock

 private:
  std::vector<std::pair<std::string, std::string>> items_;
  const std::string* lookup(const std::string& key) const;
};

}  // namespace omega
