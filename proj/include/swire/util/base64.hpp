#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swire::base64 {

std::string encode(std::span<const std::uint8_t> bytes);

// Standard alphabet, padding optional, ASCII whitespace ignored. nullopt on
// any other character or on impossible lengths.
std::optional<std::vector<std::uint8_t>> decode(std::string_view text);

}  // namespace swire::base64
