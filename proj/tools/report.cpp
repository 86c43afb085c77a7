/**
 * \file report.cpp
 * \brief Table and summary output.
 */
#include "report.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "qlab/error.hpp"

namespace qlab::tools {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{}", x);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw InputError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                     std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  auto line = [](const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ',';
      const bool quote = v[i].find_first_of(",\"\n") != std::string::npos;
      if (!quote) {
        out += v[i];
        continue;
      }
      out += '"';
      for (char c : v[i]) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    }
    return out + '\n';
  };
  std::string text = line(header_);
  for (const auto& r : rows_) text += line(r);
  return text;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("write failed for " + path.string());
}

void CsvTable::write(const std::filesystem::path& path) const { write_text(path, str()); }

std::string check_line(const CheckResult& c) {
  std::string s = fmt::format("[{}] {:>2} {} | measured: {} | required: {}", c.passed ? "PASS" : "FAIL", c.id, c.title,
                              c.measured, c.tolerance);
  if (!c.detail.empty()) s += " | " + c.detail;
  return s;
}

nlohmann::json to_json(const CheckResult& c) {
  nlohmann::json j;
  j["id"] = c.id;
  j["title"] = c.title;
  j["passed"] = c.passed;
  j["measured"] = c.measured;
  j["required"] = c.tolerance;
  j["detail"] = c.detail;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : c.metrics) m[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(num(v));
  j["metrics"] = m;
  return j;
}

}  // namespace qlab::tools
