#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geox {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Raised when a file does not parse; the message names the section.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void text(std::string_view s) {
    buf_.insert(buf_.end(), reinterpret_cast<const std::uint8_t*>(s.data()),
                reinterpret_cast<const std::uint8_t*>(s.data()) + s.size());
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { raw(v); }
  void u64(std::uint64_t v) { raw(v); }
  void f32(float v) { raw(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { raw(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  template <typename T>
  void raw(T v) {
    std::uint8_t tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf_.insert(buf_.end(), tmp, tmp + sizeof(T));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::span<const std::uint8_t> bytes(std::size_t n, std::string_view section) {
    need(n, section);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string text(std::size_t n, std::string_view section) {
    auto b = bytes(n, section);
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }
  std::uint8_t u8(std::string_view section) { return bytes(1, section)[0]; }
  std::uint32_t u32(std::string_view section) { return raw<std::uint32_t>(section); }
  std::uint64_t u64(std::string_view section) { return raw<std::uint64_t>(section); }
  float f32(std::string_view section) { return std::bit_cast<float>(raw<std::uint32_t>(section)); }
  double f64(std::string_view section) { return std::bit_cast<double>(raw<std::uint64_t>(section)); }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, std::string_view section) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated input in section '" + std::string(section) + "'");
    }
  }
  template <typename T>
  T raw(std::string_view section) {
    auto b = bytes(sizeof(T), section);
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// Ordered plain-text key=value record.
using KeyValues = std::map<std::string, std::string>;

std::string format_key_values(const KeyValues& kv);
KeyValues parse_key_values(std::string_view text, std::string_view what);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
/// First eight bytes of the SHA-256 digest, little-endian.
std::uint64_t content_hash64(std::span<const std::uint8_t> bytes);

/// splitmix64 mixing, used to derive independent seeds from tuples.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

}  // namespace geox
