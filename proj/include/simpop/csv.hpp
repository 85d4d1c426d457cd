#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace simpop::csv {

// A parsed comma-separated file. Leading lines starting with '#' are kept
// verbatim as comments so provenance headers survive a load/emit cycle.
struct Table {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, or nullopt.
    std::optional<std::size_t> find(std::string_view name) const;
    // Index of a header column; throws MissingColumn.
    std::size_t require(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::vector<std::string> split(std::string_view line);

// Shortest decimal that round-trips to the same double; NaN becomes "".
std::string format(double value);
std::string format(std::int64_t value);

// Empty field yields nullopt; malformed input throws ParseFailure.
std::optional<double> parse_double(std::string_view field, std::int64_t row, std::string_view column);
std::int64_t parse_int(std::string_view field, std::int64_t row, std::string_view column);

// Writes `text` to `path` through a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace simpop::csv
