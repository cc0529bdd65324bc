#include "omega/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace omega {

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path);
  KvConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    check(eq != std::string::npos,
          "config: expected key=value at " + path + ":" + std::to_string(lineno));
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b2 = s.find_first_not_of(" \t");
      const auto e2 = s.find_last_not_of(" \t");
      s = (b2 == std::string::npos) ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(value);
    check(!key.empty(), "config: empty key at " + path + ":" + std::to_string(lineno));
    cfg.set(key, value);
  }
  return cfg;
}

const std::string* KvConfig::lookup(const std::string& key) const {
  for (const auto& [k, v] : items_)
    if (k == key) return &v;
  return nullptr;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items_)
    if (k == key) {
      v = value;
      return;
    }
  items_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const { return lookup(key) != nullptr; }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  const std::string* v = lookup(key);
  return v ? std::stoi(*v) : fallback;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = lookup(key);
  return v ? std::stod(*v) : fallback;
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = lookup(key);
  return v ? std::stoull(*v) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": " + *v);
}

void KvConfig::require_known_keys(const std::vector<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [k, v] : items_)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty())
    throw std::runtime_error("config: unknown keys: " + unknown);
}

std::string KvConfig::serialize() const {
  std::vector<std::pair<std::string, std::string>> sorted = items_;
  std::sort(sorted.begin(), sorted.end());
  std::ostringstream out;
  for (const auto& [k, v] : sorted) out << k << "=" << v << "\n";
  return out.str();
}

void KvConfig::write_lock(const std::string& out_dir) const {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(std::filesystem::path(out_dir) / "run.lock");
  check(out.good(), "config: cannot write run.lock in " + out_dir);
  out << serialize();
}

}  // namespace omega
