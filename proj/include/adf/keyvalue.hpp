#pragma once

#include <string>
#include <utility>
#include <vector>

namespace adf {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses `key = value` lines. Blank lines and `#` comments are ignored.
KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& entries);

double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::string format_double(double v);

}  // namespace adf
