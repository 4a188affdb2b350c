#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ebpolicy::csv {

/// One parsed line plus its 1-based line number in the source.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// RFC-4180-style reader: comma separated, double-quoted fields may contain
/// commas and doubled quotes. Blank lines are skipped. Throws InputError on an
/// unterminated quote.
std::vector<Row> read(std::istream& in);

/// Strict decimal parse (no thousands separators, whole field consumed).
/// Throws InputError naming the line and column on failure.
double parse_real(const std::string& field, std::size_t line, std::string_view column);

std::string quote(std::string_view field);

/// Shortest round-trip decimal representation.
std::string format_real(double x);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace ebpolicy::csv
