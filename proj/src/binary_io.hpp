#pragma once

// Little-endian primitives for the embedding and model bundle formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hashemb/errors.hpp"

namespace hashemb::io {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void string(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void f32(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(values.data(), values.size() * sizeof(float));
    } else {
      for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
    }
  }

 private:
  template <typename T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    bytes(buf, sizeof(T));
  }

  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("unexpected end of file");
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::string string(std::uint64_t max_len = 1u << 30) {
    const std::uint64_t n = u64();
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " too large");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<float> f32(std::uint64_t count) {
    std::vector<float> out;
    // Grow in chunks so a corrupt count fails on truncation, not allocation.
    constexpr std::uint64_t kChunk = 1u << 20;
    for (std::uint64_t done = 0; done < count;) {
      const std::uint64_t n = std::min(kChunk, count - done);
      out.resize(done + n);
      if constexpr (std::endian::native == std::endian::little) {
        bytes(out.data() + done, n * sizeof(float));
      } else {
        for (std::uint64_t i = 0; i < n; ++i) out[done + i] = std::bit_cast<float>(u32());
      }
      done += n;
    }
    return out;
  }

 private:
  template <typename T>
  T le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& in_;
};

}  // namespace hashemb::io
