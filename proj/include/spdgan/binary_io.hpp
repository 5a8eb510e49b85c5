#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "spdgan/errors.hpp"

// Little-endian primitives independent of host byte order.
namespace spdgan::binio {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw IoError(std::string("truncated file while reading ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4, what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline float get_f32(std::istream& is, const char* what) { return std::bit_cast<float>(get_u32(is, what)); }
inline double get_f64(std::istream& is, const char* what) { return std::bit_cast<double>(get_u64(is, what)); }

inline std::uint8_t get_u8(std::istream& is, const char* what) {
  char c;
  read_exact(is, &c, 1, what);
  return static_cast<std::uint8_t>(c);
}

}  // namespace spdgan::binio
