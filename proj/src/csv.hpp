#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cnnselect::csv {

// Splits one CSV record. Double-quoted fields may contain commas and ""
// escapes; they may not span lines.
std::optional<std::vector<std::string>> split_line(std::string_view line);

std::string quote(std::string_view field);

// Splits text into lines, dropping a trailing '\r' on each.
std::vector<std::string_view> lines(std::string_view text);

std::optional<double> parse_double(std::string_view field);

}  // namespace cnnselect::csv
