#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sprop::text {

// Lowercases ASCII plus the Latin-1, Latin Extended-A, Greek and Cyrillic
// capital letters. Other code points pass through unchanged.
std::string utf8_lower(std::string_view s);

std::string_view trim(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

// Strict full-string parse; nullopt on trailing garbage or non-finite values.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Shortest representation that round-trips to the same double.
std::string format_double(double v);

bool has_whitespace(std::string_view s);

// Splits one CSV/TSV record. Double-quoted fields may contain the separator
// and "" escapes.
std::vector<std::string> split_record(std::string_view line, char sep);

// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string read_file(const std::string& path);

}  // namespace sprop::text
