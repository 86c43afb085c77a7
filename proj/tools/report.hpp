/**
 * \file report.hpp
 * \brief Comma-separated tables, the structured run summary and the
 *        one-line rendering of acceptance checks.
 */
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace qlab::tools {

/// Shortest text that reads back to the same double.
std::string num(double x);

/// A flat table written as comma-separated text with one header line.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  /// Appends a row; throws InputError when its width differs from the header.
  void add_row(std::vector<std::string> row);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  /// Writes the table to path, creating missing parent directories.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Outcome of one named check with its measured values and the pinned tolerance.
struct CheckResult {
  std::string id;           ///< "1" .. "13" for acceptance criteria, a name for auxiliary checks
  std::string title;
  bool passed = false;
  std::string measured;     ///< human-readable measured values
  std::string tolerance;    ///< the pass condition
  std::string detail;       ///< notes, including reasons for a failure
  std::map<std::string, double> metrics;
};

/// "[PASS] 3 Lambert W ... | measured ... | required ..." on one line.
std::string check_line(const CheckResult& c);

nlohmann::json to_json(const CheckResult& c);

/// Writes text to path, creating missing parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qlab::tools
