#pragma once

// Little-endian primitives shared by the EMB1 codec and the f64 model blobs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lnprobe/error.hpp"

namespace lnprobe::detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

// Reader that tracks its byte offset so errors can name where they happened.
class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::uint64_t offset() const { return offset_; }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw Error(ErrorCode::TruncatedPayload,
                  std::string(what) + " at offset " + std::to_string(offset_ + got) +
                      " (expected " + std::to_string(n) + " bytes, got " + std::to_string(got) +
                      ")");
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  // Bulk f32 read; decodes in place so it is correct on any host byte order.
  void f32_array(float* dst, std::size_t n, const char* what) {
    read(reinterpret_cast<char*>(dst), n * 4, what);
    if constexpr (std::endian::native != std::endian::little) {
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t raw;
        std::memcpy(&raw, dst + i, 4);
        raw = __builtin_bswap32(raw);
        std::memcpy(dst + i, &raw, 4);
      }
    }
  }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

inline void put_f32_array(std::ostream& out, const float* src, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n * 4));
  } else {
    for (std::size_t i = 0; i < n; ++i) put_f32(out, src[i]);
  }
}

}  // namespace lnprobe::detail
