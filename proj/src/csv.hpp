#pragma once

// Minimal RFC 4180 reading/writing for manifests and reports.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace optdialog::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

// Throws std::runtime_error on an unterminated quoted field. Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

std::string escape(std::string_view field);

}  // namespace optdialog::csv
