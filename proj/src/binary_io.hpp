// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian framing shared by the .vol, .dfield and checkpoint formats:
// 8-byte magic, u32 header length, JSON header, raw f32 payload.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agemap/error.hpp"

namespace agemap::detail {

using Bytes = std::vector<unsigned char>;

inline void append_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t load_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline void append_u32_at(unsigned char* dst, std::uint32_t v) {
  dst[0] = static_cast<unsigned char>(v & 0xffu);
  dst[1] = static_cast<unsigned char>((v >> 8) & 0xffu);
  dst[2] = static_cast<unsigned char>((v >> 16) & 0xffu);
  dst[3] = static_cast<unsigned char>((v >> 24) & 0xffu);
}

inline void append_f32(Bytes& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + 4 * values.size());
  unsigned char* dst = out.data() + start;
  for (float f : values) {
    append_u32_at(dst, std::bit_cast<std::uint32_t>(f));
    dst += 4;
  }
}

inline std::vector<float> load_f32(std::span<const unsigned char> bytes, bool require_finite) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(load_u32(bytes.data() + 4 * i));
    if (require_finite && !std::isfinite(out[i])) fail(Errc::decode, "non-finite value in payload");
  }
  return out;
}

inline Bytes frame(std::string_view magic, const nlohmann::ordered_json& header) {
  Bytes out(magic.begin(), magic.end());
  const std::string text = header.dump();
  append_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

struct Unframed {
  nlohmann::json header;
  std::span<const unsigned char> payload;
};

inline Unframed unframe(std::span<const unsigned char> bytes, std::string_view magic) {
  if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    fail(Errc::decode, "bad magic");
  if (bytes.size() < magic.size() + 4) fail(Errc::decode, "truncated header");
  const std::uint32_t len = load_u32(bytes.data() + magic.size());
  const std::size_t body = magic.size() + 4;
  if (bytes.size() < body + len) fail(Errc::decode, "truncated header");
  Unframed u;
  try {
    u.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(body),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(body + len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, std::string("bad header: ") + e.what());
  }
  u.payload = bytes.subspan(body + len);
  return u;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "short write to " + path.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace agemap::detail
