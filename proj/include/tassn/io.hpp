#pragma once

// On-disk formats: binary PGM/PPM images, raw little-endian f32 arrays with
// a one-line text header, and small text helpers.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tassn::io {

// Planar image, values in [0,1], data layout [channels][h][w].
struct Image {
  int channels = 0, h = 0, w = 0;
  std::vector<double> data;

  static Image zeros(int channels, int h, int w) {
    Image im;
    im.channels = channels;
    im.h = h;
    im.w = w;
    im.data.assign(static_cast<size_t>(channels) * h * w, 0.0);
    return im;
  }
  double& at(int c, int i, int j) { return data[(static_cast<size_t>(c) * h + i) * w + j]; }
  double at(int c, int i, int j) const { return data[(static_cast<size_t>(c) * h + i) * w + j]; }
};

inline std::uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

inline void write_pnm(const std::string& path, const Image& im) {
  if (im.channels != 1 && im.channels != 3)
    throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << (im.channels == 1 ? "P5" : "P6") << "\n" << im.w << " " << im.h << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<size_t>(im.w) * im.channels);
  for (int i = 0; i < im.h; ++i) {
    for (int j = 0; j < im.w; ++j)
      for (int c = 0; c < im.channels; ++c)
        row[static_cast<size_t>(j) * im.channels + c] = quantize8(im.at(c, i, j));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255)
    throw std::runtime_error("unsupported PNM file " + path);
  in.get();  // single whitespace after header
  const int channels = magic == "P5" ? 1 : 3;
  Image im = Image::zeros(channels, h, w);
  std::vector<std::uint8_t> row(static_cast<size_t>(w) * channels);
  for (int i = 0; i < h; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("truncated PNM file " + path);
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < channels; ++c)
        im.at(c, i, j) = row[static_cast<size_t>(j) * channels + c] / 255.0;
  }
  return im;
}

// Raw f32 array file: one text header line "name rank d1 d2 ...", then
// little-endian 32-bit floats in row-major order.
inline void write_array(const std::string& path, const std::string& name,
                        const std::vector<int>& dims, const std::vector<double>& values) {
  std::int64_t n = 1;
  for (int d : dims) n *= d;
  if (n != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("write_array: dims/value mismatch for " + name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << name << " " << dims.size();
  for (int d : dims) out << " " << d;
  out << "\n";
  std::vector<float> f(values.begin(), values.end());
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
}

struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<double> values;
};

inline NamedArray read_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  NamedArray a;
  size_t rank = 0;
  if (!(hs >> a.name >> rank)) throw std::runtime_error("bad array header in " + path);
  a.dims.resize(rank);
  std::int64_t n = 1;
  for (auto& d : a.dims) {
    if (!(hs >> d)) throw std::runtime_error("bad array dims in " + path);
    n *= d;
  }
  std::vector<float> f(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw std::runtime_error("truncated array file " + path);
  a.values.assign(f.begin(), f.end());
  return a;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tassn::io
