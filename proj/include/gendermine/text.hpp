#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 and hashing helpers shared by every stage.
namespace gendermine::text {

bool is_valid_utf8(std::string_view s);

// Full Unicode lowercase (root locale).
std::string to_lower(std::string_view s);

// True if the first code point is an uppercase letter.
bool starts_uppercase(std::string_view s);

// True if every code point is a Unicode punctuation character.
bool is_all_punct(std::string_view s);

std::string trim(std::string_view s);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// First `width` hex characters of the SHA-256 digest; used for record ids.
std::string short_digest(std::string_view data, std::size_t width = 16);

// Inverse of tokenization for display and translation requests: single spaces,
// except no space before closing punctuation and none after opening brackets.
std::string detokenize(std::span<const std::string> tokens);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);

} // namespace gendermine::text
