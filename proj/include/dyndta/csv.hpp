#pragma once

// Minimal delimited-text reader for the pipeline's input tables. The
// delimiter (tab or comma) is detected from the header line.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dyndta {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Index of a named column; throws MalformedInput naming the missing column.
  std::size_t column(std::string_view name) const;
};

// Blank lines and lines starting with '#' are skipped. Throws MalformedInput
// (with the line number) on rows whose field count differs from the header.
CsvTable read_csv(std::istream& in, std::string_view source = "input");

double parse_double(std::string_view field, std::size_t line, std::string_view column);

// Quotes nothing; callers write fields that never contain the delimiter.
std::string join_fields(const std::vector<std::string>& fields, char delimiter = ',');

}  // namespace dyndta
