#include "csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "colearn/errors.hpp"

namespace colearn::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

Table parse(std::string_view text) {
    Table t;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto fields = split(line);
        if (!have_header) {
            for (auto f : fields) t.header.emplace_back(f);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw FormatError(line_no, "expected " + std::to_string(t.header.size()) +
                                           " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) {
            const std::string s(f);
            char* parse_end = nullptr;
            errno = 0;
            const double v = std::strtod(s.c_str(), &parse_end);
            if (s.empty() || parse_end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
                throw FormatError(line_no, "not a finite number: \"" + s + "\"");
            }
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw FormatError(1, "missing header row");
    return t;
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace colearn::csv
