#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dvhkit {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Whole-string finite number parse (leading '+' allowed).
bool parse_double(std::string_view text, double& out);

std::string_view trim(std::string_view s);
std::string lower(std::string_view s);

/// Lines without terminators; handles CRLF and a UTF-8 byte order mark.
std::vector<std::string_view> split_lines(std::string_view content);

/// Splits on every occurrence of `sep`.
std::vector<std::string_view> split(std::string_view text, std::string_view sep);

}  // namespace dvhkit
