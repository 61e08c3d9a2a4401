#pragma once

// Little-endian primitives shared by the dataset cache and checkpoints.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "dyndta/error.hpp"

namespace dyndta::binio {

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v, 4); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v, 8); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::MalformedInput, std::string(what) + " truncated");
  }
}

inline std::uint64_t get_le(std::istream& in, int bytes, const char* what) {
  std::array<unsigned char, 8> buf{};
  read_exact(in, reinterpret_cast<char*>(buf.data()), static_cast<std::size_t>(bytes), what);
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | buf[static_cast<std::size_t>(i)];
  return v;
}

inline double get_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le(in, 8, what)); }

inline std::string get_str(std::istream& in, const char* what) {
  const auto n = static_cast<std::size_t>(get_le(in, 4, what));
  std::string s;
  // Grow in chunks so a corrupt length cannot trigger a huge allocation.
  constexpr std::size_t kChunk = 1 << 16;
  while (s.size() < n) {
    const std::size_t take = std::min(kChunk, n - s.size());
    const std::size_t at = s.size();
    s.resize(at + take);
    read_exact(in, s.data() + at, take, what);
  }
  return s;
}

}  // namespace dyndta::binio
