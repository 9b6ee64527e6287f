#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace nlflow::csv {

std::vector<std::string> split(std::string_view line, char sep = ',');

/// Strict numeric parse; `where` is used in the DataError message.
double to_double(const std::string& field, const std::string& where);
long to_long(const std::string& field, const std::string& where);

/// Reads the header row and returns its column names (trimmed).
std::vector<std::string> read_header(std::istream& is);

/// Next non-empty line; false at end of stream. `line_no` is advanced.
bool next_row(std::istream& is, std::vector<std::string>& fields, long& line_no);

}  // namespace nlflow::csv
