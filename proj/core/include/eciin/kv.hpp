#pragma once

#include <map>
#include <string>
#include <vector>

namespace eciin {

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. `[section]` headers prefix following keys
/// with "section.". `#` and `;` start comments. Duplicate keys are an error.
KeyValues parse_key_values(const std::string& text);
/// Canonical form: keys sorted, one `key = value` per line.
std::string format_key_values(const KeyValues& kv);

int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key, const std::string& value);
std::string format_double(double v);
std::string format_int_list(const std::vector<int>& values);

}  // namespace eciin
