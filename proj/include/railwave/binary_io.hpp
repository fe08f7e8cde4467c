#pragma once

// Little-endian field readers/writers shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "railwave/error.hpp"

namespace railwave::io {

static_assert(std::endian::native == std::endian::little, "railwave file formats assume a little-endian host");

class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_magic(std::string_view magic) { put_bytes(magic.data(), magic.size()); }
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v) { put_bytes(&v, sizeof v); }
  void put_u64(std::uint64_t v) { put_bytes(&v, sizeof v); }
  void put_f32(float v) { put_bytes(&v, sizeof v); }
  void put_f64(double v) { put_bytes(&v, sizeof v); }
  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked cursor; running off the end throws with the supplied error code.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, ErrorCode on_short)
      : data_(data), on_short_(on_short) {}

  void get_bytes(void* out, std::size_t n) {
    require(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::span<const std::uint8_t> view(std::size_t n) {
    require(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool match_magic(std::string_view magic) {
    if (remaining() < magic.size()) return false;
    bool ok = std::memcmp(data_.data() + pos_, magic.data(), magic.size()) == 0;
    pos_ += magic.size();
    return ok;
  }
  std::uint8_t get_u8() { std::uint8_t v; get_bytes(&v, 1); return v; }
  std::uint32_t get_u32() { std::uint32_t v; get_bytes(&v, 4); return v; }
  std::uint64_t get_u64() { std::uint64_t v; get_bytes(&v, 8); return v; }
  float get_f32() { float v; get_bytes(&v, 4); return v; }
  double get_f64() { double v; get_bytes(&v, 8); return v; }
  std::string get_string() {
    auto n = get_u32();
    auto s = view(n);
    return std::string(reinterpret_cast<const char*>(s.data()), s.size());
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(on_short_, "unexpected end of data");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorCode on_short_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace railwave::io
