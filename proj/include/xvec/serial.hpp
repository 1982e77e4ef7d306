// xvec/serial.hpp

// Copyright 2026  xvec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Little-endian binary readers/writers used by the archive, checkpoint and
// backend-model formats. Streams track the byte offset so format errors can
// name the exact position.

#ifndef XVEC_SERIAL_HPP_
#define XVEC_SERIAL_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "xvec/error.hpp"

namespace xvec {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string &path)
      : path_(path), os_(path, std::ios::binary | std::ios::trunc) {
    if (!os_) throw DataError("cannot open for writing: " + path);
  }

  void bytes(const void *p, std::size_t n) {
    os_.write(static_cast<const char *>(p), static_cast<std::streamsize>(n));
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }

  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_le(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le(bits);
  }

  void str(const std::string &s) { bytes(s.data(), s.size()); }

  void close() {
    os_.close();
    if (!os_) throw DataError("write failed: " + path_);
  }

 private:
  template <typename T>
  void put_le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(T));
  }

  std::string path_;
  std::ofstream os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string &path)
      : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw DataError("cannot open for reading: " + path);
  }

  std::uint64_t offset() const { return offset_; }
  const std::string &path() const { return path_; }

  void bytes(void *p, std::size_t n) {
    is_.read(static_cast<char *>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw DataError(path_ + ": truncated at byte offset " +
                      std::to_string(offset_));
    offset_ += n;
  }

  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }

  float f32() {
    const std::uint32_t bits = get_le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  bool at_eof() {
    return is_.peek() == std::char_traits<char>::eof();
  }

  [[noreturn]] void fail(const std::string &what) const {
    throw DataError(path_ + ": " + what + " at byte offset " +
                    std::to_string(offset_));
  }

 private:
  template <typename T>
  T get_le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  std::string path_;
  std::ifstream is_;
  std::uint64_t offset_ = 0;
};

}  // namespace xvec

#endif  // XVEC_SERIAL_HPP_
