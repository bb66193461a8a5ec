#include "didkit/csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <istream>

#include "didkit/errors.hpp"

namespace didkit {

namespace {

std::vector<std::string> split_record(const std::string& line, size_t lineno) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw ValidationError("csv: unterminated quote on line " + std::to_string(lineno));
  }
  out.push_back(field);
  return out;
}

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_record(line, lineno);
    if (table.header.empty()) {
      for (auto& f : fields) f = trimmed(f);
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ValidationError("csv: line " + std::to_string(lineno) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw ValidationError("csv: empty input");
  return table;
}

long parse_integer(const std::string& text, const std::string& context) {
  const std::string t = trimmed(text);
  if (t.empty()) throw ValidationError(context + ": empty value, expected an integer");
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (errno != 0 || end == t.c_str() || *end != '\0') {
    throw ValidationError(context + ": '" + text + "' is not an integer");
  }
  return v;
}

double parse_real(const std::string& text, const std::string& context) {
  const std::string t = trimmed(text);
  if (t.empty()) throw ValidationError(context + ": empty value, expected a number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (errno != 0 || end == t.c_str() || *end != '\0') {
    throw ValidationError(context + ": '" + text + "' is not a number");
  }
  return v;
}

}  // namespace didkit
