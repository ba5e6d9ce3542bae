#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace otrw::csv {

// RFC-4180 table: header row plus string cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws ConfigError when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

Table parse(const std::string& text);
Table read_file(const std::filesystem::path& path);

std::string format(const Table& table);
void write_file(const std::filesystem::path& path, const Table& table);

// Shortest representation that parses back to the same double.
std::string number(double value);

}  // namespace otrw::csv
