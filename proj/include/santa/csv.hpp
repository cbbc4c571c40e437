#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace santa {

// '.' decimal, 10 significant digits, no locale.
std::string format_number(double x);

/// Minimal CSV table: header row mandatory, LF line endings, no quoting
/// (fields must not contain commas, quotes or newlines).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(std::string_view name) const;  // throws if missing
  bool has_column(std::string_view name) const;
  std::string to_string() const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace santa
