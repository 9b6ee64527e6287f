#include "nlflow/csv.hpp"

#include "nlflow/error.hpp"

#include <charconv>
#include <istream>

namespace nlflow::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& field, const std::string& where) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw DataError(where + ": cannot parse number '" + field + "'");
  }
  return value;
}

long to_long(const std::string& field, const std::string& where) {
  long value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw DataError(where + ": cannot parse integer '" + field + "'");
  }
  return value;
}

std::vector<std::string> read_header(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    if (!trim(line).empty()) return split(line);
  }
  return {};
}

bool next_row(std::istream& is, std::vector<std::string>& fields, long& line_no) {
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    fields = split(line);
    return true;
  }
  return false;
}

}  // namespace nlflow::csv
