#pragma once

#include <string>
#include <string_view>

namespace sketchgrasp {

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);
/// Raw 32-byte SHA-256 digest.
std::string sha256(std::string_view bytes);
std::string to_hex(std::string_view bytes);

}  // namespace sketchgrasp
