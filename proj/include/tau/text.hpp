#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tau {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Lowercases ASCII and collapses runs of whitespace to single spaces,
// trimming the ends. Used by activation classifiers when normalization
// is enabled.
std::string casefold_collapse(std::string_view s);

bool contains(std::string_view haystack, std::string_view needle);

// Locale-independent float formatting ("." decimal separator, shortest
// round-trip). Integers format without exponent.
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace tau
