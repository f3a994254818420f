#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>

#include "dnlb/common.hpp"

namespace dnlb {

// Explicit little-endian encoding so files are identical across hosts.

class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

  void u32(std::uint32_t v) { put_bytes(v); }
  void u64(std::uint64_t v) { put_bytes(v); }
  void f64(double v) { put_bytes(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { put_bytes(std::bit_cast<std::uint32_t>(v)); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  void bytes(std::span<const std::uint8_t> v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size()));
  }

  void check() const {
    if (!out_) fail("write failed");
  }

 private:
  template <typename U>
  void put_bytes(U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out_.write(buf.data(), buf.size());
  }

  std::ostream& out_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != m) fail("bad magic: expected '", m, "'");
  }

  std::uint32_t u32() { return get_bytes<std::uint32_t>(); }
  std::uint64_t u64() { return get_bytes<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_bytes<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(get_bytes<std::uint32_t>()); }
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) fail("unexpected end of file");
    return static_cast<std::uint8_t>(c);
  }

  void f64s(std::span<double> v) {
    for (double& x : v) x = f64();
  }
  void f32s(std::span<float> v) {
    for (float& x : v) x = f32();
  }
  void bytes(std::span<std::uint8_t> v) {
    in_.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(v.size()));
    if (!in_) fail("unexpected end of file");
  }

  void expect_eof() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      fail("trailing bytes after payload");
    }
  }

 private:
  template <typename U>
  U get_bytes() {
    std::array<unsigned char, sizeof(U)> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!in_) fail("unexpected end of file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(buf[i]) << (8 * i);
    }
    return v;
  }

  std::istream& in_;
};

}  // namespace dnlb
