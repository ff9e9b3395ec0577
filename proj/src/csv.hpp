#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpvis::csv {

struct Row {
    std::size_t line = 0;  // 1-based line number in the source text
    std::vector<std::string> fields;
};

// Comma-delimited with RFC 4180 style double quotes. Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

std::optional<double> parse_number(std::string_view s);

std::string format_number(double v);

std::string quote_if_needed(const std::string& s);

}  // namespace dpvis::csv
