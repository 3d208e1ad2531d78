// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_IO_DATASET_HPP_
#define NRB_IO_DATASET_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "nrb/core/array.hpp"
#include "nrb/core/error.hpp"
#include "nrb/core/random.hpp"
#include "nrb/io/image_io.hpp"

namespace nrb {

struct LoadedImage {
  std::string id;
  NdArray pixels;
};

enum class SyntheticKind { Gradient, Checkerboard, Noise, Mixed };

inline const char* synthetic_kind_name(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::Gradient: return "gradient";
    case SyntheticKind::Checkerboard: return "checkerboard";
    case SyntheticKind::Noise: return "noise";
    case SyntheticKind::Mixed: return "mixed";
  }
  fail("synthetic_kind_name: bad kind");
}

// In-source test set description: "synthetic:<kind>,<size>[,count=N][,seed=S]"
// with kind in {gradient, checkerboard, noise, mixed}.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Mixed;
  int size = 0;
  int count = 1;
  uint64_t seed = 0;
};

inline bool is_synthetic_source(const std::string& source) {
  return source.rfind("synthetic:", 0) == 0;
}

inline SyntheticSpec parse_synthetic_spec(const std::string& source) {
  check(is_synthetic_source(source),
        "synthetic spec must start with 'synthetic:', got '", source, "'");
  std::vector<std::string> parts;
  {
    std::string rest = source.substr(10);
    size_t pos = 0;
    while (pos <= rest.size()) {
      const size_t comma = rest.find(',', pos);
      parts.push_back(rest.substr(
          pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  check(parts.size() >= 2, "synthetic spec needs '<kind>,<size>', got '",
        source, "'");

  SyntheticSpec spec;
  if (parts[0] == "gradient") spec.kind = SyntheticKind::Gradient;
  else if (parts[0] == "checkerboard") spec.kind = SyntheticKind::Checkerboard;
  else if (parts[0] == "noise") spec.kind = SyntheticKind::Noise;
  else if (parts[0] == "mixed") spec.kind = SyntheticKind::Mixed;
  else fail("synthetic spec: unknown kind '", parts[0], "'");

  auto parse_positive = [&](const std::string& s, const char* what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    check(end == s.c_str() + s.size() && v > 0, "synthetic spec: bad ", what,
          " '", s, "'");
    return v;
  };
  spec.size = static_cast<int>(parse_positive(parts[1], "size"));
  for (size_t i = 2; i < parts.size(); ++i) {
    const size_t eq = parts[i].find('=');
    check(eq != std::string::npos, "synthetic spec: expected key=value, got '",
          parts[i], "'");
    const std::string key = parts[i].substr(0, eq);
    const std::string val = parts[i].substr(eq + 1);
    if (key == "count") {
      spec.count = static_cast<int>(parse_positive(val, "count"));
    } else if (key == "seed") {
      char* end = nullptr;
      spec.seed = std::strtoull(val.c_str(), &end, 10);
      check(end == val.c_str() + val.size(), "synthetic spec: bad seed '",
            val, "'");
    } else {
      fail("synthetic spec: unknown key '", key, "'");
    }
  }
  return spec;
}

namespace detail {

inline NdArray synthetic_gradient(int size, uint64_t seed) {
  Rng rng(mix_seed(seed, "gradient"));
  NdArray out({size, size, 3});
  const double den = size > 1 ? size - 1.0 : 1.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double base = rng.uniform(0.15, 0.55);
    const double gy = rng.uniform(-0.4, 0.4);
    const double gx = rng.uniform(-0.4, 0.4);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double v = base + gy * (y / den) + gx * (x / den);
        out.at3(y, x, ch) = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      }
  }
  return out;
}

inline NdArray synthetic_checkerboard(int size, uint64_t seed) {
  Rng rng(mix_seed(seed, "checkerboard"));
  const int max_tile = size / 4 > 2 ? size / 4 : 2;
  const int tile = static_cast<int>(rng.uniform_int(2, max_tile));
  double c0[3], c1[3];
  for (int ch = 0; ch < 3; ++ch) {
    c0[ch] = rng.uniform(0.05, 0.45);
    c1[ch] = rng.uniform(0.55, 0.95);
  }
  NdArray out({size, size, 3});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool odd = ((y / tile) + (x / tile)) % 2 != 0;
      for (int ch = 0; ch < 3; ++ch)
        out.at3(y, x, ch) = odd ? c1[ch] : c0[ch];
    }
  return out;
}

// Uniform noise pushed through a few box-filter passes: keeps some local
// correlation so the images are neither flat nor pure white noise.
inline NdArray synthetic_noise(int size, uint64_t seed) {
  Rng rng(mix_seed(seed, "noise"));
  NdArray img = rng.uniform_array({size, size, 3}, 0.0, 1.0);
  const int passes = static_cast<int>(rng.uniform_int(1, 3));
  for (int p = 0; p < passes; ++p) {
    NdArray next({size, size, 3});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          double s = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int yy = y + dy, xx = x + dx;
              yy = yy < 0 ? 0 : (yy >= size ? size - 1 : yy);
              xx = xx < 0 ? 0 : (xx >= size ? size - 1 : xx);
              s += img.at3(yy, xx, ch);
            }
          next.at3(y, x, ch) = s / 9.0;
        }
    img = std::move(next);
  }
  return img;
}

}  // namespace detail

inline NdArray synthetic_image(SyntheticKind kind, int size, uint64_t seed) {
  check(size > 0, "synthetic_image: size must be positive");
  switch (kind) {
    case SyntheticKind::Gradient: return detail::synthetic_gradient(size, seed);
    case SyntheticKind::Checkerboard:
      return detail::synthetic_checkerboard(size, seed);
    case SyntheticKind::Noise: return detail::synthetic_noise(size, seed);
    case SyntheticKind::Mixed: break;
  }
  fail("synthetic_image: mixed resolves per index, not per image");
}

inline std::vector<LoadedImage> make_synthetic_set(const SyntheticSpec& spec) {
  static constexpr SyntheticKind kRotation[3] = {SyntheticKind::Gradient,
                                                 SyntheticKind::Checkerboard,
                                                 SyntheticKind::Noise};
  std::vector<LoadedImage> out;
  out.reserve(static_cast<size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    const SyntheticKind kind = spec.kind == SyntheticKind::Mixed
                                   ? kRotation[i % 3]
                                   : spec.kind;
    const uint64_t seed = mix_seed(spec.seed, static_cast<uint64_t>(i));
    out.push_back({std::string(synthetic_kind_name(kind)) + "-" +
                       std::to_string(i),
                   synthetic_image(kind, spec.size, seed)});
  }
  return out;
}

// Loads a benchmark image set. `source` is either a "synthetic:" spec or a
// directory of 8-bit PNG/PPM/PGM files (raw sidecars included); pixel values
// are value/255 in [0,1]. Unreadable directory entries are skipped with a
// warning, appended to `warnings` when given, otherwise printed to stderr.
// The result order is deterministic: filename-sorted for directories.
inline std::vector<LoadedImage> load_images(
    const std::string& source, std::vector<std::string>* warnings = nullptr) {
  if (is_synthetic_source(source))
    return make_synthetic_set(parse_synthetic_spec(source));

  namespace fs = std::filesystem;
  check(fs::is_directory(source), "load_images: not a directory: ", source);
  std::vector<std::string> names;
  for (const fs::directory_entry& e : fs::directory_iterator(source))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());

  auto warn = [&](const std::string& msg) {
    if (warnings)
      warnings->push_back(msg);
    else
      std::cerr << "[nrbench] warning: " << msg << '\n';
  };

  std::vector<LoadedImage> out;
  for (const std::string& name : names) {
    const std::string path = (fs::path(source) / name).string();
    std::string ext = fs::path(name).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    try {
      if (ext == ".png") {
        out.push_back({name, read_png(path)});
      } else if (ext == ".ppm" || ext == ".pgm") {
        out.push_back({name, read_ppm(path)});
      } else if (ext == ".nrbraw") {
        out.push_back({name, read_raw(path)});
      } else {
        warn("skipped non-image file " + path);
      }
    } catch (const std::exception& e) {
      warn(std::string("skipped unreadable image: ") + e.what());
    }
  }
  check(!out.empty(), "load_images: no readable images in ", source);
  return out;
}

}  // namespace nrb

#endif  // NRB_IO_DATASET_HPP_
