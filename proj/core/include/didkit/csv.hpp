#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace didkit {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  int column(const std::string& name) const;
};

// Reads a comma-separated table with a header row. Handles quoted fields,
// embedded commas and doubled quotes, and CRLF line endings. Blank lines are
// skipped. Throws ValidationError on ragged rows or an empty stream.
CsvTable read_csv(std::istream& in);

// Strict scalar parsing; `context` names the offending row/column in errors.
long parse_integer(const std::string& text, const std::string& context);
double parse_real(const std::string& text, const std::string& context);

}  // namespace didkit
