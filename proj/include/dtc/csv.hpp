#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dtc::csv {

struct Row {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

// Splits RFC-4180 text into records. Quoted fields may hold commas, doubled
// quotes and line breaks; CRLF and LF terminators are both accepted. Blank
// lines are skipped. Throws ParseError for an unterminated quote or for
// stray characters around a quoted field.
std::vector<Row> parse(std::string_view text);

std::string read_file(const std::string& path);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace dtc::csv
