#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace p2pb {

// Little-endian stream helpers composed byte-by-byte so file formats do not
// depend on host endianness.

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff),
  };
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  write_u32_le(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  write_u32_le(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32_le(os, bits);
}

inline void write_f64_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64_le(os, bits);
}

inline bool read_u32_le(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool read_u64_le(std::istream& is, std::uint64_t& v) {
  std::uint32_t lo = 0, hi = 0;
  if (!read_u32_le(is, lo) || !read_u32_le(is, hi)) return false;
  v = static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
  return true;
}

inline bool read_f32_le(std::istream& is, float& v) {
  std::uint32_t bits = 0;
  if (!read_u32_le(is, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

inline bool read_f64_le(std::istream& is, double& v) {
  std::uint64_t bits = 0;
  if (!read_u64_le(is, bits)) return false;
  std::memcpy(&v, &bits, 8);
  return true;
}

} // namespace p2pb
