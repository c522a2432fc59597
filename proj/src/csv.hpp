#pragma once

// Minimal numeric CSV reader/writer shared by the bank and dataset formats.

#include <string>
#include <string_view>
#include <vector>

namespace colearn::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Parses a header line followed by numeric rows. Every row must have as
/// many fields as the header. FormatError offsets are 1-based line numbers.
Table parse(std::string_view text);

/// %.9g, enough to round-trip float32 and to keep 9 significant digits.
std::string format_value(double v);

}  // namespace colearn::csv
