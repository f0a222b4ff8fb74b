#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace rsopt::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(std::string_view name) const;
  /// Column index by name; throws ConfigError when missing.
  std::size_t require(std::string_view name) const;
};

/// Reads a comma-separated file with a header row. Surrounding whitespace of
/// every cell is trimmed; blank lines are skipped.
Table read(const std::filesystem::path& path);
Table parse(std::istream& in, const std::string& source);

/// Shortest round-trip decimal representation.
std::string format(double v);

double to_double(const std::string& cell, const std::string& context);
long to_long(const std::string& cell, const std::string& context);

/// Writes `cells` joined by commas plus a newline.
void write_row(std::ostream& out, const std::vector<std::string>& cells);

}  // namespace rsopt::csv
