#include "omega/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace omega {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string Checkpoint::meta_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  return fallback;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta)
    if (k == key) {
      v = value;
      return;
    }
  meta.emplace_back(key, value);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "save_checkpoint: cannot open " + path);
  out << "OMEGA-CKPT 1\n";
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << " " << v << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << " " << t.ndim();
    for (int d : t.shape) out << " " << d;
    out << " " << offset << "\n";
    offset += t.numel() * sizeof(float);
  }
  out << "end\n";
  for (const auto& [name, t] : ckpt.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  check(out.good(), "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(in, line);
  check(line == "OMEGA-CKPT 1", "load_checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta.emplace_back(key, value);
    } else if (kind == "tensor") {
      Entry e;
      int ndim = 0;
      ss >> e.name >> ndim;
      e.shape.resize(static_cast<std::size_t>(ndim));
      for (int& d : e.shape) ss >> d;
      ss >> e.offset;
      check(ss.good() || ss.eof(), "load_checkpoint: bad tensor line in " + path);
      entries.push_back(std::move(e));
    } else {
      throw std::runtime_error("load_checkpoint: unexpected line in " + path);
    }
  }
  const std::streampos blob_start = in.tellg();
  for (auto& e : entries) {
    Tensor<float> t(e.shape);
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    check(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)),
          "load_checkpoint: truncated blob in " + path);
    ckpt.tensors.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

}  // namespace omega
