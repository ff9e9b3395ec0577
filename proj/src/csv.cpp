#include "csv.hpp"

#include <array>
#include <cmath>

namespace dpvis::csv {

std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    std::size_t line = 1;
    row.line = 1;

    auto end_row = [&] {
        if (any || !field.empty() || !row.fields.empty()) {
            row.fields.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row = Row{};
        field.clear();
        any = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                any = true;
                break;
            case ',':
                row.fields.push_back(std::move(field));
                field.clear();
                any = true;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                ++line;
                row.line = line;
                break;
            default:
                field.push_back(c);
                any = true;
        }
    }
    end_row();
    // UTF-8 byte order mark on the header
    if (!rows.empty() && !rows.front().fields.empty()) {
        auto& f = rows.front().fields.front();
        if (f.rfind("\xEF\xBB\xBF", 0) == 0) f.erase(0, 3);
    }
    return rows;
}

std::optional<double> parse_number(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace dpvis::csv
