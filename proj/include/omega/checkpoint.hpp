#pragma once

#include <string>
#include <utility>
#include <vector>

#include "omega/tensor.hpp"

namespace omega {

// Parameter checkpoint: plain-text manifest header (name, shape, byte offset
// per tensor, plus free-form meta lines), followed by one flat blob of
// little-endian 32-bit floats. Round trips are bit-exact.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
  std::string meta_value(const std::string& key, const std::string& fallback = "") const;
  void set_meta(const std::string& key, const std::string& value);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace omega
