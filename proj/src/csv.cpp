#include "dyndta/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>

#include "dyndta/error.hpp"

namespace dyndta {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorCode::MalformedInput, "line 1: missing required column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in, std::string_view source) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  char delim = ',';
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!have_header) {
      delim = view.find('\t') != std::string_view::npos ? '\t' : ',';
      table.header = split(view, delim);
      have_header = true;
      continue;
    }
    auto fields = split(line, delim);
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedInput, std::string(source) + " line " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(table.header.size()) + " fields, found " +
                                                 std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(ErrorCode::NoRecords, std::string(source) + ": no records (empty input)");
  return table;
}

double parse_double(std::string_view field, std::size_t line, std::string_view column) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::MalformedInput, "line " + std::to_string(line) + ": column '" + std::string(column) +
                                               "' is not a number: '" + std::string(field) + "'");
  }
  return value;
}

std::string join_fields(const std::vector<std::string>& fields, char delimiter) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delimiter);
    out += fields[i];
  }
  return out;
}

}  // namespace dyndta
