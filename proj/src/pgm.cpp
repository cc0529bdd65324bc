#include "omega/pgm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace omega {

namespace {

constexpr double kIntensityRange = 2.0;  // stored range [0, 2]

void read_header(std::ifstream& in, const std::string& path, int expected_maxval,
                 int& h, int& w) {
  std::string magic;
  in >> magic;
  check(magic == "P5", "pgm: not a P5 file: " + path);
  int maxval = 0;
  in >> w >> h >> maxval;
  check(in.good() && w > 0 && h > 0, "pgm: bad header in " + path);
  check(maxval == expected_maxval, "pgm: unexpected maxval in " + path);
  in.get();  // single whitespace after maxval
}

}  // namespace

void write_pgm16(const std::string& path, const Tensor<double>& img) {
  check(img.ndim() == 2, "write_pgm16: expected 2-D image");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "write_pgm16: cannot open " + path);
  out << "P5\n" << img.dim(1) << " " << img.dim(0) << "\n65535\n";
  std::vector<unsigned char> buf(img.numel() * 2);
  for (std::size_t i = 0; i < img.numel(); ++i) {
    double v = img.data[i];
    v = std::min(kIntensityRange, std::max(0.0, v));
    const auto q = static_cast<std::uint16_t>(std::lround(v / kIntensityRange * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  check(out.good(), "write_pgm16: write failed for " + path);
}

Tensor<double> read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "read_pgm16: cannot open " + path);
  int h = 0, w = 0;
  read_header(in, path, 65535, h, w);
  Tensor<double> img({h, w});
  std::vector<unsigned char> buf(img.numel() * 2);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  check(in.gcount() == static_cast<std::streamsize>(buf.size()), "read_pgm16: truncated " + path);
  for (std::size_t i = 0; i < img.numel(); ++i) {
    const std::uint16_t q = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    img.data[i] = static_cast<double>(q) / 65535.0 * kIntensityRange;
  }
  return img;
}

void write_pgm8(const std::string& path, const Tensor<unsigned char>& labels) {
  check(labels.ndim() == 2, "write_pgm8: expected 2-D label map");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "write_pgm8: cannot open " + path);
  out << "P5\n" << labels.dim(1) << " " << labels.dim(0) << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data.data()),
            static_cast<std::streamsize>(labels.numel()));
  check(out.good(), "write_pgm8: write failed for " + path);
}

Tensor<unsigned char> read_pgm8(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "read_pgm8: cannot open " + path);
  int h = 0, w = 0;
  read_header(in, path, 255, h, w);
  Tensor<unsigned char> labels({h, w});
  in.read(reinterpret_cast<char*>(labels.data.data()), static_cast<std::streamsize>(labels.numel()));
  check(in.gcount() == static_cast<std::streamsize>(labels.numel()), "read_pgm8: truncated " + path);
  return labels;
}

}  // namespace omega
