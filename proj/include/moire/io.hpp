#pragma once

#include <filesystem>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace moire {

/// Round-trip "%.17g" formatting; identical bytes for identical doubles.
std::string fmt_double(double v);

/// Small CSV writer: one "# units:" comment line, a header, then rows.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::string& units, const std::vector<std::string>& columns);
  void row(std::initializer_list<double> values);
  void row(const std::vector<double>& values);

 private:
  std::ostream& os_;
  std::size_t ncol_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed, key-sorted, trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Applies "a.b.c=value" to j; value parsed as JSON if possible, else kept as a string.
void apply_dotted_override(nlohmann::json& j, const std::string& assignment);

}  // namespace moire
