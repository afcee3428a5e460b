// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "segobs/tensor.hpp"

namespace segobs {

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(is), "truncated file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32le(std::ostream& os, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // assume little-endian host (checked once at stream open)
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

inline bool host_is_little_endian() {
  const std::uint32_t x = 1;
  return *reinterpret_cast<const unsigned char*>(&x) == 1;
}

}  // namespace detail

/// Tensor file format: magic "OTNS1", u8 rank, rank x u32 little-endian dims,
/// then float32 little-endian payload.
inline void write_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  require(detail::host_is_little_endian(), "tensor_io: big-endian hosts are unsupported");
  require(t.rank() >= 1, "write_tensor: tensor must have at least one dimension");
  require(t.rank() <= 255, "write_tensor: rank too large");
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "write_tensor: cannot open " + path.string());
  os.write("OTNS1", 5);
  const unsigned char rank = static_cast<unsigned char>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t i = 0; i < t.rank(); ++i) {
    require(t.dim(i) <= UINT32_MAX, "write_tensor: dimension overflow");
    detail::write_u32le(os, static_cast<std::uint32_t>(t.dim(i)));
  }
  detail::write_f32le(os, t.data(), t.size());
  require(static_cast<bool>(os), "write_tensor: write failed for " + path.string());
}

inline Tensor<float> read_tensor(const std::filesystem::path& path) {
  require(detail::host_is_little_endian(), "tensor_io: big-endian hosts are unsupported");
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "read_tensor: cannot open " + path.string());
  char magic[5];
  is.read(magic, 5);
  require(static_cast<bool>(is) && std::memcmp(magic, "OTNS1", 5) == 0, "read_tensor: bad magic in " + path.string());
  unsigned char rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  require(static_cast<bool>(is), "read_tensor: truncated header in " + path.string());
  require(rank >= 1, "read_tensor: empty shape in " + path.string());
  Shape shape(rank);
  std::size_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = detail::read_u32le(is, path.string());
    require(shape[i] > 0, "read_tensor: zero dimension in " + path.string());
    require(total <= (std::size_t(1) << 40) / std::max<std::size_t>(shape[i], 1),
            "read_tensor: dimension overflow in " + path.string());
    total *= shape[i];
  }
  std::vector<float> data(total);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * 4));
  require(static_cast<bool>(is), "read_tensor: truncated payload in " + path.string());
  return Tensor<float>::from_data(std::move(shape), std::move(data));
}

/// Binary PPM (P6, 8-bit). Images are (3,H,W) floats in [0,1]; write/read
/// round-trips up to the 8-bit quantisation step.
inline void write_image(const std::filesystem::path& path, const Tensor<float>& image) {
  require(image.rank() == 3 && image.dim(0) == 3, "write_image: expected (3,H,W), got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  require(h > 0 && w > 0, "write_image: empty image");
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "write_image: cannot open " + path.string());
  os << "P6\n" << w << " " << h << "\n255\n";
  const float* v = image.data();
  std::vector<unsigned char> row(w * 3);
  const std::size_t hw = h * w;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        float f = v[c * hw + y * w + x];
        f = std::min(1.0f, std::max(0.0f, f));
        row[x * 3 + c] = static_cast<unsigned char>(std::lround(f * 255.0f));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  require(static_cast<bool>(os), "write_image: write failed for " + path.string());
}

inline Tensor<float> read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "read_image: cannot open " + path.string());
  std::string magic;
  is >> magic;
  require(magic == "P6", "read_image: bad magic in " + path.string());
  auto next_token = [&]() -> long {
    // skips whitespace and '#' comments
    while (true) {
      int ch = is.peek();
      require(ch != EOF, "read_image: malformed header in " + path.string());
      if (std::isspace(ch)) {
        is.get();
      } else if (ch == '#') {
        std::string junk;
        std::getline(is, junk);
      } else {
        break;
      }
    }
    long v = -1;
    is >> v;
    require(static_cast<bool>(is) && v >= 0, "read_image: malformed header in " + path.string());
    return v;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  require(w > 0 && h > 0, "read_image: bad dimensions in " + path.string());
  require(maxval == 255, "read_image: only 8-bit PPM supported, " + path.string());
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(static_cast<bool>(is), "read_image: truncated pixel data in " + path.string());
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  std::vector<float> data(3 * hw);
  for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y)
    for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x)
      for (std::size_t c = 0; c < 3; ++c)
        data[c * hw + y * w + x] = static_cast<float>(raw[(y * w + x) * 3 + c]) / 255.0f;
  return Tensor<float>::from_data(Shape{3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                                  std::move(data));
}

}  // namespace segobs
