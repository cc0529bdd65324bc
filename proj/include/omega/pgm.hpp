#pragma once

#include <string>

#include "omega/tensor.hpp"

namespace omega {

// Binary PGM (P5). Images are stored 16-bit (big-endian sample order, per the
// format), intensities mapped from [0,2] to [0,65535]; label maps are 8-bit
// raw class indices.

void write_pgm16(const std::string& path, const Tensor<double>& img);
Tensor<double> read_pgm16(const std::string& path);

void write_pgm8(const std::string& path, const Tensor<unsigned char>& labels);
Tensor<unsigned char> read_pgm8(const std::string& path);

}  // namespace omega
