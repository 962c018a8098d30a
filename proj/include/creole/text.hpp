#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace creole::text {

// Returns the byte offset of the first invalid sequence, or nullopt if `s` is
// well-formed UTF-8 (overlongs and surrogates rejected).
std::optional<std::size_t> find_invalid_utf8(std::string_view s);

// Decodes well-formed UTF-8. Callers validate first; invalid bytes decode as U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
void append_utf8(std::string& out, char32_t cp);

// Simple case folding: ASCII, Latin-1, Latin Extended-A and Latin Extended
// Additional (enough for the Latin-script creoles and their lexifiers).
char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view s);

// Letters as seen by the language identifier: ASCII alphabetics plus any
// non-ASCII code point outside the common punctuation and symbol blocks.
bool is_letter(char32_t cp);

std::string_view trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool has_whitespace(std::string_view s);

}  // namespace creole::text
