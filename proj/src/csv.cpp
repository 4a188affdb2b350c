#include "ebpolicy/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "ebpolicy/errors.hpp"

namespace ebpolicy::csv {

std::vector<Row> read(std::istream& in) {
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    Row row;
    row.line = line_no;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field.push_back('"');
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        row.fields.push_back(std::move(field));
        field.clear();
      } else {
        field.push_back(ch);
      }
    }
    if (quoted) {
      throw InputError("line " + std::to_string(line_no) + ": unterminated quoted field");
    }
    row.fields.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_real(const std::string& field, std::size_t line, std::string_view column) {
  const auto first = field.find_first_not_of(" \t");
  const auto last = field.find_last_not_of(" \t");
  double value = 0.0;
  if (first != std::string::npos) {
    const char* begin = field.data() + first;
    const char* end = field.data() + last + 1;
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec == std::errc() && ptr == end && std::isfinite(value)) return value;
  }
  std::ostringstream msg;
  msg << "line " << line << ", column '" << column << "': not a finite number: '" << field
      << "'";
  throw InputError(msg.str());
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_real(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, ptr);
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

}  // namespace ebpolicy::csv
