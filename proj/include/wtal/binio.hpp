#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "wtal/errors.hpp"

// Little-endian binary encode/decode helpers shared by the feature and
// checkpoint file formats, plus the FNV-1a hash used for config and
// checkpoint fingerprints.

namespace wtal::io {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

inline void put_u8(std::string& out, std::uint8_t v) {
  out.push_back(static_cast<char>(v));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline void put_f64(std::string& out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

// Cursor over an in-memory file image. Every read is bounds-checked and
// raises FormatError mentioning the failing field.
class Reader {
 public:
  Reader(const std::string& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}
  // The reader only borrows the buffer; a temporary would dangle.
  Reader(std::string&&, std::string) = delete;

  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  double f64(const char* field) {
    need(8, field);
    double v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  std::string raw(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void f64_array(double* dst, std::size_t n, const char* field) {
    need(8 * n, field);
    std::memcpy(dst, bytes_.data() + pos_, 8 * n);
    pos_ += 8 * n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void expect_end() {
    if (pos_ != bytes_.size())
      throw FormatError(context_ + ": trailing bytes after payload");
  }

 private:
  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(context_ + ": truncated while reading " + field);
  }

  const std::string& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

// Whole-file read/write. Errors raise DataError naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace wtal::io
