#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "swire/imaging/image.hpp"

namespace swire::imaging {

// PNG (8-bit gray/RGB/palette/alpha, any bit depth libpng can expand) or
// JPEG, detected from the signature. Colour is reduced to luminance.
GrayImage read_gray(const std::filesystem::path& path);
GrayImage decode_gray(std::span<const std::uint8_t> bytes);
RgbImage decode_rgb(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const GrayImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const GrayImage& img, const std::filesystem::path& path);
// Edges written as {0, 255}.
void write_png(const EdgeMap& edges, const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace swire::imaging
