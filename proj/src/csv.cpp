#include "simpop/csv.hpp"

#include "simpop/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace simpop::csv {

std::optional<std::size_t> Table::find(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

std::size_t Table::require(std::string_view name) const {
    if (auto idx = find(name)) return *idx;
    throw MissingColumn(std::string(name));
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

Table parse(std::string_view text) {
    Table table;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!have_header) {
            if (!line.empty() && line.front() == '#') {
                table.comments.emplace_back(line);
                continue;
            }
            if (line.empty()) continue;
            table.header = split(line);
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = split(line);
        if (fields.size() != table.header.size()) {
            const auto row = static_cast<std::int64_t>(table.rows.size() + 1);
            const std::string col = fields.size() < table.header.size() ? table.header[fields.size()] : table.header.back();
            throw ParseFailure(row, col);
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

Table read(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string format(double value) {
    if (std::isnan(value)) return {};
    if (value == 0.0) return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string format(std::int64_t value) { return std::to_string(value); }

std::optional<double> parse_double(std::string_view field, std::int64_t row, std::string_view column) {
    if (field.empty()) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw ParseFailure(row, std::string(column));
    }
    return value;
}

std::int64_t parse_int(std::string_view field, std::int64_t row, std::string_view column) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseFailure(row, std::string(column));
    }
    return value;
}

void write_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw Error("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace simpop::csv
