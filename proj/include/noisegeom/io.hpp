#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace noisegeom {

/// Shortest decimal that round-trips to the same double.
std::string format_number(double x);
/// 17 significant digits (lossless, fixed width of precision).
std::string format_number17(double x);
/// Strict parse of a full token; throws ValidationError.
double parse_number(std::string_view token);
long long parse_integer(std::string_view token);

std::vector<std::string> split(std::string_view text, char sep);
std::vector<std::string> split_whitespace(std::string_view text);

/// Writes text to path, creating parent directories.
void write_file(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace noisegeom
