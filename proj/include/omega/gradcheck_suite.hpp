#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace omega {

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 1e-4;
  bool passed = false;
};

// Central-difference checks, double precision, for every differentiable
// operation the networks use: convolution stack, softmax+CCE, the
// matrix -> grid -> sampler chain, and the matrix/image losses. Probe inputs
// are rejection-sampled away from non-smooth points.
std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed);

}  // namespace omega
