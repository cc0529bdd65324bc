#pragma once

#include <cstdint>
#include <string_view>

namespace omega {

// Deterministic random stream. All draws are implemented on top of raw
// 64-bit outputs so that sequences are identical across platforms and
// standard-library versions (std::*_distribution is not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) { next_u64(); }

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // standard normal, Box-Muller with a cached spare
  double gaussian();

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named sub-stream seeding: every random decision in the project flows from
// one root seed plus a stream tag and integer coordinates.
uint64_t stream_seed(uint64_t root, std::string_view tag);
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a);
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a, uint64_t b);
uint64_t stream_seed(uint64_t root, std::string_view tag, uint64_t a, uint64_t b, uint64_t c);

}  // namespace omega
