#include "swire/util/binio.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "swire/util/error.hpp"

namespace swire::binio {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; chunk to stay portable for large buffers.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t value) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", value);
  return buf;
}

std::string seal_hex(std::span<const std::uint8_t> sealed) {
  if (sealed.size() < 4) throw FormatError("sealed buffer shorter than its checksum");
  return hex32(crc32(sealed.first(sealed.size() - 4)));
}

void Writer::bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }

void Writer::u8(std::uint8_t v) { buf_.push_back(v); }

void Writer::u32(std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf_.insert(buf_.end(), p, p + 4);
}

void Writer::u64(std::uint64_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf_.insert(buf_.end(), p, p + 8);
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void Writer::f32s(std::span<const float> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  buf_.insert(buf_.end(), p, p + values.size_bytes());
}

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void Writer::seal() { u32(crc32(buf_)); }

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void Writer::write_file(const std::filesystem::path& path) const { binio::write_file(path, buf_); }

Reader Reader::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(data));
}

void Reader::verify_seal(std::string_view what) {
  if (buf_.size() < 4) throw FormatError(std::string(what) + ": file truncated (checksum missing)");
  const std::size_t body = buf_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf_.data() + body, 4);
  if (crc32(std::span(buf_.data(), body)) != stored) {
    throw FormatError(std::string(what) + ": checksum mismatch (file corrupt or truncated)");
  }
  end_ = body;
  sized_ = true;
}

void Reader::expect_magic(std::string_view magic, std::string_view what) {
  if (!sized_) end_ = buf_.size();
  need(magic.size());
  if (std::memcmp(buf_.data() + pos_, magic.data(), magic.size()) != 0) {
    throw FormatError(std::string(what) + ": bad magic, expected " + std::string(magic));
  }
  pos_ += magic.size();
}

void Reader::need(std::size_t n) {
  if (!sized_ && end_ == 0) end_ = buf_.size();
  if (end_ - pos_ < n) throw FormatError("unexpected end of data");
}

std::uint8_t Reader::u8() {
  need(1);
  return buf_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }

void Reader::f32s(std::span<float> out) {
  need(out.size_bytes());
  std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

}  // namespace swire::binio
