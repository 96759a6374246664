#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clear::io {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

/// Parses the whole string as a double; std::nullopt if it is not a number.
std::optional<double> parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over the target, so a
/// reader never observes a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

using CsvRow = std::vector<std::string>;

/// RFC-4180 parser: quoted fields, doubled quotes, embedded newlines, CRLF.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_field(std::string_view field);
std::string csv_line(const CsvRow& fields);

}  // namespace clear::io
