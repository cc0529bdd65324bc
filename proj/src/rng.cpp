#include "omega/rng.hpp"

#include <cmath>

namespace omega {

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

namespace {

uint64_t mix(uint64_t h, uint64_t v) {
  // splitmix64 finalizer as a mixing step
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

uint64_t hash_tag(std::string_view tag) {
  // FNV-1a
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

uint64_t stream_seed(uint64_t root, std::string_view tag) {
  return mix(root, hash_tag(tag));
}
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a) {
  return mix(stream_seed(root, tag), a);
}
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a, uint64_t b) {
  return mix(mix(stream_seed(root, tag), a), b);
}
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a, uint64_t b, uint64_t c) {
  return mix(mix(mix(stream_seed(root, tag), a), b), c);
}

}  // namespace omega
