// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_IO_IMAGE_IO_HPP_
#define NRB_IO_IMAGE_IO_HPP_

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"

namespace nrb {

namespace detail {

inline unsigned char to_byte(real v) {
  const real c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

inline void store32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t load32le(std::istream& is) {
  unsigned char b[4] = {0, 0, 0, 0};
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

// Snaps values to the 8-bit grid. write_png followed by read_png reproduces
// quantize8 of the original exactly.
inline NdArray quantize8(const NdArray& x) {
  NdArray out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = detail::to_byte(x.data[i]) / 255.0;
  return out;
}

inline NdArray read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0)
    fail("read_png: ", path, ": ", image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int c = gray ? 1 : 3;
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0)
    fail("read_png: ", path, ": ", image.message);
  NdArray out({h, w, c});
  for (size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

inline void write_png(const std::string& path, const NdArray& x) {
  check(x.rank() == 3 && (x.c() == 1 || x.c() == 3),
        "write_png: need HxWx1 or HxWx3, got ", shape_str(x.shape));
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(x.w());
  image.height = static_cast<png_uint_32>(x.h());
  image.format = x.c() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(x.data.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = detail::to_byte(x.data[i]);
  if (png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0,
                              nullptr) == 0)
    fail("write_png: ", path, ": ", image.message);
}

// Binary PPM (P6) and PGM (P5), 8-bit, with '#' comments in the header.
inline NdArray read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "read_ppm: cannot open ", path);
  std::string magic;
  f >> magic;
  check(magic == "P6" || magic == "P5", "read_ppm: ", path,
        ": unsupported magic '", magic, "'");
  const int c = magic == "P6" ? 3 : 1;
  auto next_int = [&](const char* what) {
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string comment;
        std::getline(f, comment);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    long v = -1;
    f >> v;
    check(f.good() && v >= 0, "read_ppm: ", path, ": bad ", what);
    return v;
  };
  const long w = next_int("width");
  const long h = next_int("height");
  const long maxval = next_int("maxval");
  check(maxval == 255, "read_ppm: ", path, ": only maxval 255 supported");
  f.get();  // single whitespace byte before pixel data
  std::vector<unsigned char> buf(static_cast<size_t>(h * w * c));
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size()));
  check(f.gcount() == static_cast<std::streamsize>(buf.size()), "read_ppm: ",
        path, ": truncated pixel data");
  NdArray out({static_cast<int>(h), static_cast<int>(w), c});
  for (size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

inline void write_ppm(const std::string& path, const NdArray& x) {
  check(x.rank() == 3 && (x.c() == 1 || x.c() == 3),
        "write_ppm: need HxWx1 or HxWx3, got ", shape_str(x.shape));
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "write_ppm: cannot open ", path);
  f << (x.c() == 3 ? "P6" : "P5") << '\n'
    << x.w() << ' ' << x.h() << "\n255\n";
  std::vector<unsigned char> buf(x.data.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = detail::to_byte(x.data[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  check(f.good(), "write_ppm: write failed for ", path);
}

// Raw float32 sidecar. 8-bit formats round pixel values by up to 1/510,
// which can push a reloaded adversarial example past its norm bound; the
// sidecar preserves the crafted values to float precision.
//
// Layout, little endian: "NRBRAW01", uint32 h, w, c, then h*w*c float32
// in y-major, then x, then channel order.
inline constexpr char kRawMagic[8] = {'N', 'R', 'B', 'R', 'A', 'W', '0', '1'};

inline void write_raw(const std::string& path, const NdArray& x) {
  check(x.rank() == 3, "write_raw: need rank-3 image, got ",
        shape_str(x.shape));
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "write_raw: cannot open ", path);
  f.write(kRawMagic, 8);
  detail::store32le(f, static_cast<uint32_t>(x.h()));
  detail::store32le(f, static_cast<uint32_t>(x.w()));
  detail::store32le(f, static_cast<uint32_t>(x.c()));
  for (real v : x.data)
    detail::store32le(f, std::bit_cast<uint32_t>(static_cast<float>(v)));
  check(f.good(), "write_raw: write failed for ", path);
}

inline NdArray read_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "read_raw: cannot open ", path);
  char magic[8];
  f.read(magic, 8);
  check(f.gcount() == 8 && std::memcmp(magic, kRawMagic, 8) == 0,
        "read_raw: ", path, ": bad magic");
  const uint32_t h = detail::load32le(f);
  const uint32_t w = detail::load32le(f);
  const uint32_t c = detail::load32le(f);
  check(f.good() && h > 0 && w > 0 && c > 0 && h <= 1u << 20 &&
            w <= 1u << 20 && c <= 64,
        "read_raw: ", path, ": bad dimensions");
  NdArray out({static_cast<int>(h), static_cast<int>(w),
               static_cast<int>(c)});
  for (real& v : out.data) {
    const uint32_t bits = detail::load32le(f);
    check(!f.fail(), "read_raw: ", path, ": truncated");
    v = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace nrb

#endif  // NRB_IO_IMAGE_IO_HPP_
