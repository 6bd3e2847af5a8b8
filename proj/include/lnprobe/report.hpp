#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace lnprobe {

using Cell = std::variant<std::string, std::int64_t, double>;

enum class ReportFormat { Json, Text, Csv };

ReportFormat parse_report_format(std::string_view name);

// Tabular task result. Every rendering starts with the provenance header;
// numbers print identically in all formats (shortest round-trip form).
struct Report {
  std::string task;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  nlohmann::json details = nlohmann::json::object();  // JSON-only extras

  void add_row(std::vector<Cell> row);
  std::size_t column(const std::string& name) const;
};

// For every group of rows sharing `group_columns`, appends a copy of the row
// with the highest `value_column` (earliest row on ties) whose layer cell is
// replaced by "best:<layer>".
void add_best_rows(Report& report, const std::vector<std::string>& group_columns,
                   const std::string& layer_column, const std::string& value_column);

std::string format_number(double value);
std::string render_report(const Report& report, ReportFormat format);

}  // namespace lnprobe
