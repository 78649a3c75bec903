#include "swire/imaging/io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "swire/imaging/imaging.hpp"
#include "swire/util/error.hpp"

namespace swire::imaging {

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// Decodes to 8-bit gray or RGB; alpha is composited onto white.
std::vector<std::uint8_t> decode_png_raw(std::span<const std::uint8_t> bytes, bool color, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode failed: ") + image.message);
  }
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_color white{255, 255, 255};
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, &white, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG decode failed: " + msg);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return buf;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

std::vector<std::uint8_t> decode_jpeg_raw(std::span<const std::uint8_t> bytes, bool color, int& w, int& h) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = color ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  const int ch = cinfo.output_components;
  out.resize(static_cast<std::size_t>(w) * h * ch);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * ch;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::vector<std::uint8_t> encode_png_raw(const std::uint8_t* pixels, int w, int h, bool color) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RgbImage decode_rgb(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  std::vector<std::uint8_t> raw;
  if (is_png(bytes)) {
    raw = decode_png_raw(bytes, true, w, h);
  } else if (is_jpeg(bytes)) {
    raw = decode_jpeg_raw(bytes, true, w, h);
  } else {
    throw FormatError("unrecognised image format (expected PNG or JPEG)");
  }
  RgbImage img(w, h);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
  return img;
}

GrayImage decode_gray(std::span<const std::uint8_t> bytes) {
  // Colour inputs go through to_gray so the luminance weights are ours, not
  // the codec's.
  bool gray_source = false;
  if (is_png(bytes)) {
    png_image probe;
    std::memset(&probe, 0, sizeof(probe));
    probe.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&probe, bytes.data(), bytes.size())) {
      throw FormatError(std::string("PNG decode failed: ") + probe.message);
    }
    gray_source = (probe.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png_image_free(&probe);
    if (gray_source) {
      int w = 0, h = 0;
      const auto raw = decode_png_raw(bytes, false, w, h);
      GrayImage img(w, h);
      for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
      return img;
    }
  } else if (!is_jpeg(bytes)) {
    throw FormatError("unrecognised image format (expected PNG or JPEG)");
  }
  return to_gray(decode_rgb(bytes));
}

GrayImage read_gray(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_gray(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> px(img.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(img.data[i]);
  return encode_png_raw(px.data(), img.width, img.height, false);
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  std::vector<std::uint8_t> px(img.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(img.data[i]);
  return encode_png_raw(px.data(), img.width, img.height, true);
}

namespace {

void write_all(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_png(const GrayImage& img, const std::filesystem::path& path) {
  write_all(encode_png(img), path);
}

void write_png(const EdgeMap& edges, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(edges.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = edges.data[i] ? 255 : 0;
  write_all(encode_png_raw(px.data(), edges.width, edges.height, false), path);
}

}  // namespace swire::imaging
