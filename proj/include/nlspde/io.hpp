#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nlspde {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);

/// Strict decimal parse; `field` names the input in the error message.
double parse_decimal(std::string_view text, std::string_view field);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(std::string_view name) const;  // -1 when absent
};

/// Numeric CSV with a header line. Blank lines and '#' comments skipped.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// TOML subset: [tables], [dotted.tables], key = value with strings,
/// numbers, booleans and flat arrays; '#' comments. Errors carry the line.
nlohmann::json parse_toml(std::string_view text);

/// Reads a .toml or .json file into a JSON document.
nlohmann::json load_document(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace nlspde
