#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gazereg/errors.hpp"

namespace gazereg {

using Bytes = std::vector<std::uint8_t>;

// Little-endian encoders that do not depend on host byte order.

inline void put_u32(Bytes &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(Bytes &out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(Bytes &out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_raw(Bytes &out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

/// Sequential little-endian reader; throws LengthError on overrun.
class ByteReader {
public:
  explicit ByteReader(const Bytes &b) : data_(b.data()), size_(b.size()) {}

  std::size_t remaining() const { return size_ - pos_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

private:
  void need(std::size_t n) const {
    if (remaining() < n) throw LengthError("unexpected end of data");
  }
  const std::uint8_t *data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path &p);
void write_file(const std::filesystem::path &p, const Bytes &b);
void write_text(const std::filesystem::path &p, std::string_view text);
std::string read_text(const std::filesystem::path &p);

} // namespace gazereg
