#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emlmlasso {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180: quoted fields, doubled quotes, CRLF or LF line ends. Blank lines
// are skipped.
CsvTable parse_csv(std::string_view text);

// Full-cell numeric parse with surrounding blanks trimmed; nullopt otherwise.
std::optional<double> parse_double(std::string_view cell);

// 17 significant digits, round-trippable.
std::string format_double(double v);

std::string csv_escape(std::string_view field);

}  // namespace emlmlasso
