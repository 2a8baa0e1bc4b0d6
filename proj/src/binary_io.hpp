#pragma once

// Little-endian primitive encoding for the snapshot formats.

#include "vns/core.hpp"

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace vns::detail {

inline void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  put_u64(os, u);
}

inline void put_u8(std::ostream& os, std::uint8_t x) { os.put(static_cast<char>(x)); }

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error(Errc::IoError, "truncated snapshot");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::IoError, "truncated snapshot");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t u = get_u64(is);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

inline std::uint8_t get_u8(std::istream& is) {
  char c;
  if (!is.get(c)) throw Error(Errc::IoError, "truncated snapshot");
  return static_cast<std::uint8_t>(c);
}

}  // namespace vns::detail
