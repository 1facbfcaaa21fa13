#pragma once

// Little-endian byte packing shared by the bitstream and checkpoint formats.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "resicap/errors.hpp"

namespace resicap::wire {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void i8(std::int8_t v) { u8(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* data, std::size_t n) {
    buf_.append(static_cast<const char*>(data), n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }

  const std::string& buffer() const { return buf_; }
  void to_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open for writing: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw InputError("write failed: " + path);
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  static Reader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(data), path);
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::uint16_t u16() {
    need(2);
    const auto lo = static_cast<std::uint16_t>(u8());
    return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::uint32_t u32() {
    need(4);
    const auto lo = static_cast<std::uint32_t>(u16());
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::uint64_t u64() {
    need(8);
    const auto lo = static_cast<std::uint64_t>(u32());
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  // Consumes 4 bytes and checks them against the expected tag. A file shorter
  // than the tag is reported as truncation, a mismatching tag as a format
  // error.
  void magic(const char (&m)[5]) {
    const std::string got = bytes(4);
    if (got != std::string(m, 4)) {
      throw FormatError(origin_ + ": bad magic, expected '" + std::string(m, 4) + "'");
    }
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  // Call after parsing: trailing bytes mean the stream is corrupt.
  void expect_end() const {
    if (remaining() != 0) {
      throw CorruptStreamError(origin_ + ": " + std::to_string(remaining()) +
                               " trailing bytes after payload");
    }
  }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw TruncationError(origin_ + ": unexpected end of data at offset " +
                            std::to_string(pos_));
    }
  }
  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace resicap::wire
