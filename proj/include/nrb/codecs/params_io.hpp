// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef NRB_CODECS_PARAMS_IO_HPP_
#define NRB_CODECS_PARAMS_IO_HPP_

// Codec parameter container file:
//   bytes 0..7   magic "NRBCODEC"
//   bytes 8..9   format version, u16 little-endian
//   bytes 10..13 JSON header length, u32 little-endian
//   JSON header  family, latent_channels, lambda, training metadata, and a
//                tensor manifest (name, shape, byte offset into the payload)
//   payload      all tensor data as f32 little-endian, manifest order
// Values are stored in f32; snap_params_to_f32 makes an in-memory codec
// match what a save/load round trip produces, bit for bit.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nrb/codecs/codec.hpp"
#include "nrb/core/error.hpp"

namespace nrb {

inline constexpr char kCodecMagic[9] = "NRBCODEC";  // 8 payload bytes + NUL
inline constexpr uint16_t kCodecFormatVersion = 1;

inline void snap_params_to_f32(ToyCodec& codec) {
  for (ParamTensor& p : codec.mutable_params())
    for (real& v : p.value.data) v = static_cast<real>(static_cast<float>(v));
}

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float f) {
  const uint32_t b = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((b >> (8 * i)) & 0xff));
}
inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline float get_f32(const unsigned char* p) {
  return std::bit_cast<float>(get_u32(p));
}

}  // namespace detail

inline void save_codec(const ToyCodec& codec, const std::string& path,
                       const nlohmann::json& training_meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["family"] = family_name(codec.spec().family);
  header["latent_channels"] = codec.spec().latent_channels;
  header["lambda"] = codec.spec().lambda;
  header["training"] = training_meta;

  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (const ParamTensor& p : codec.params()) {
    nlohmann::json t;
    t["name"] = p.name;
    t["shape"] = p.value.shape;
    t["offset"] = payload.size();
    manifest.push_back(std::move(t));
    for (real v : p.value.data) detail::put_f32(payload, static_cast<float>(v));
  }
  header["tensors"] = std::move(manifest);

  const std::string json_text = header.dump();
  std::string blob;
  blob.reserve(14 + json_text.size() + payload.size());
  blob.append(kCodecMagic, 8);
  detail::put_u16(blob, kCodecFormatVersion);
  detail::put_u32(blob, static_cast<uint32_t>(json_text.size()));
  blob += json_text;
  blob += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "cannot open '", path, "' for writing");
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  check(f.good(), "short write to '", path, "'");
}

inline ToyCodec load_codec(const std::string& path,
                           nlohmann::json* training_meta = nullptr) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open codec file '", path, "'");
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  const unsigned char* b = reinterpret_cast<const unsigned char*>(blob.data());

  check(blob.size() >= 14, "'", path, "': truncated header");
  check(std::memcmp(blob.data(), kCodecMagic, 8) == 0, "'", path,
        "': not a codec parameter file (bad magic)");
  const uint16_t version = detail::get_u16(b + 8);
  check(version == kCodecFormatVersion, "'", path, "': format version ",
        version, " unsupported (want ", kCodecFormatVersion, ")");
  const uint32_t json_len = detail::get_u32(b + 10);
  check(blob.size() >= 14 + static_cast<size_t>(json_len), "'", path,
        "': truncated JSON header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.begin() + 14, blob.begin() + 14 + json_len);
  } catch (const nlohmann::json::exception& e) {
    fail("'", path, "': corrupt JSON header: ", e.what());
  }

  CodecSpec spec;
  try {
    spec.family = family_from_name(header.at("family").get<std::string>());
    spec.latent_channels = header.at("latent_channels").get<int>();
    spec.lambda = header.at("lambda").get<double>();
    if (training_meta) *training_meta = header.value("training", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail("'", path, "': bad header fields: ", e.what());
  }
  check(spec.latent_channels >= 1 && spec.latent_channels <= 1024, "'", path,
        "': implausible latent_channels ", spec.latent_channels);

  const size_t payload_off = 14 + json_len;
  const size_t payload_size = blob.size() - payload_off;
  std::vector<ParamTensor> tensors;
  try {
    for (const nlohmann::json& t : header.at("tensors")) {
      ParamTensor p;
      p.name = t.at("name").get<std::string>();
      const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      const size_t off = t.at("offset").get<size_t>();
      NdArray v(shape);
      const size_t count = static_cast<size_t>(v.numel());
      check(off + 4 * count <= payload_size, "'", path, "': tensor '",
            p.name, "' runs past the end of the payload (truncated file?)");
      for (size_t i = 0; i < count; ++i)
        v.data[i] = static_cast<real>(detail::get_f32(b + payload_off + off + 4 * i));
      p.value = std::move(v);
      tensors.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    fail("'", path, "': bad tensor manifest: ", e.what());
  }

  return ToyCodec(spec, std::move(tensors));
}

}  // namespace nrb

#endif  // NRB_CODECS_PARAMS_IO_HPP_
