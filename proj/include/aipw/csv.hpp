#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace aipw {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Shortest round-trip decimal form of a double (up to 17 significant
/// digits); parses back bit-exactly.
std::string format_double(double v);

/// UTF-8, LF line endings, atomic replace (temp file + rename). Every row
/// must match the header width.
void write_csv(const CsvTable& table, const std::filesystem::path& path);

}  // namespace aipw
