#pragma once

// "key = value" text configuration. '#' starts a comment; blank lines are
// ignored. List values are comma separated.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dyndta {

using KeyValues = std::map<std::string, std::string, std::less<>>;

// Throws MalformedInput naming the line for lines without '=' or repeated keys.
KeyValues parse_key_values(std::string_view text);

// Typed field readers. Each throws InvalidValue naming the field when the
// text does not parse.
long long parse_int_field(std::string_view field, std::string_view text);
double parse_double_field(std::string_view field, std::string_view text);
bool parse_bool_field(std::string_view field, std::string_view text);
std::vector<std::size_t> parse_size_list_field(std::string_view field, std::string_view text);
std::vector<std::string> parse_string_list_field(std::string_view text);

std::string format_double(double v);
std::string format_size_list(const std::vector<std::size_t>& v);

}  // namespace dyndta
