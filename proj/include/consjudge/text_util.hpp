#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace consjudge {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string to_lower_ascii(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Case-insensitive (ASCII) search; returns npos when absent.
std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from = 0);

/// Lower-cases, replaces punctuation (ASCII and common Unicode blocks) with
/// spaces, and splits on whitespace.
std::vector<std::string> normalize_tokens(std::string_view text);
/// normalize_tokens joined by single spaces.
std::string normalize_text(std::string_view text);

/// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);
/// 64-bit FNV-1a; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace consjudge
