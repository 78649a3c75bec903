#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swire::binio {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::string hex32(std::uint32_t value);
// CRC32 of a sealed buffer's body (its stored seal), as 8 hex digits.
std::string seal_hex(std::span<const std::uint8_t> sealed);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Little-endian byte sink used by every on-disk format.
class Writer {
 public:
  void bytes(std::string_view raw);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f32s(std::span<const float> values);
  void str(std::string_view s);  // u32 length + bytes

  // Appends CRC32 of everything written so far.
  void seal();

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
  static Reader from_file(const std::filesystem::path& path);

  // Verifies and strips the trailing CRC32. Throws FormatError on mismatch.
  void verify_seal(std::string_view what);
  void expect_magic(std::string_view magic, std::string_view what);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  void f32s(std::span<float> out);
  std::string str();

  bool at_end() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n);

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  bool sized_ = false;
};

}  // namespace swire::binio
