#pragma once

// Small string helpers shared across modules.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cupl {

std::string_view trim(std::string_view s);
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string_view text, std::string_view from, std::string_view to);
std::vector<std::string> split(std::string_view text, char sep);

/// Splits one CSV record; double-quoted fields may contain commas and "".
std::vector<std::string> parse_csv_line(std::string_view line);
/// Quotes a field when it contains a comma, quote or line break.
std::string csv_field(std::string_view field);

/// Fixed-point rendering with `decimals` digits; "-0.00" collapses to "0.00".
std::string format_fixed(double value, int decimals);
/// Like format_fixed but always carries a sign ("+1.06", "-2.08", "+0.00").
std::string format_signed(double value, int decimals);
/// Shortest text that parses back to exactly `value`.
std::string format_shortest(double value);

}  // namespace cupl
