#pragma once

// Little-endian binary writers/readers with byte-offset tracking.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lutnet/errors.hpp"

namespace lutnet::detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <class T>
  void put(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
    bytes(buf, sizeof(T));
  }
  void put_f32(float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits);
  }
  void bytes(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os_) throw Error("write failed");
    count_ += n;
  }
  std::size_t count() const { return count_; }

 private:
  std::ostream& os_;
  std::size_t count_ = 0;
};

class Reader {
 public:
  Reader(std::istream& is, std::size_t base_offset = 0) : is_(is), offset_(base_offset) {}

  template <class T>
  T get(const char* what) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
  }
  float get_f32(const char* what) {
    const auto bits = get<std::uint32_t>(what);
    float v = 0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void bytes(void* out, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) throw ParseError(std::string("truncated input while reading ") + what, offset_ + got);
    offset_ += n;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_;
};

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace lutnet::detail
