#include "lnprobe/report.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lnprobe/error.hpp"

namespace lnprobe {

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "text") return ReportFormat::Text;
  if (name == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::ParseError, "unknown report format '" + std::string(name) + "'");
}

void Report::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw Error(ErrorCode::LengthMismatch, "report row has " + std::to_string(row.size()) +
                                               " cells, expected " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t Report::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::MissingInput, "report has no column " + name);
  return static_cast<std::size_t>(it - columns.begin());
}

std::string format_number(double value) { return nlohmann::json(value).dump(); }

namespace {

std::string cell_text(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return format_number(std::get<double>(cell));
}

nlohmann::json cell_json(const Cell& cell) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, cell);
}

double cell_value(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return static_cast<double>(*i);
  throw Error(ErrorCode::InvariantViolation, "report cell is not numeric");
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void add_best_rows(Report& report, const std::vector<std::string>& group_columns,
                   const std::string& layer_column, const std::string& value_column) {
  const auto layer_idx = report.column(layer_column);
  const auto value_idx = report.column(value_column);
  std::vector<std::size_t> group_idx;
  for (const auto& c : group_columns) group_idx.push_back(report.column(c));

  std::vector<std::string> order;
  std::map<std::string, std::size_t> best;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    std::string key;
    for (const auto g : group_idx) key += cell_text(report.rows[r][g]) + '\x1f';
    auto [it, fresh] = best.emplace(key, r);
    if (fresh) {
      order.push_back(key);
    } else if (cell_value(report.rows[r][value_idx]) > cell_value(report.rows[it->second][value_idx])) {
      it->second = r;
    }
  }
  for (const auto& key : order) {
    auto row = report.rows[best[key]];
    row[layer_idx] = "best:" + cell_text(row[layer_idx]);
    report.rows.push_back(std::move(row));
  }
}

std::string render_report(const Report& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Json) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
      nlohmann::json obj = nlohmann::json::object();
      for (std::size_t c = 0; c < row.size(); ++c) obj[report.columns[c]] = cell_json(row[c]);
      rows.push_back(std::move(obj));
    }
    nlohmann::json doc = {{"provenance", report.provenance},
                          {"task", report.task},
                          {"columns", report.columns},
                          {"rows", std::move(rows)}};
    if (!report.details.empty()) doc["details"] = report.details;
    out << doc.dump(2) << '\n';
    return out.str();
  }

  out << "# provenance " << report.provenance.dump() << '\n';
  if (format == ReportFormat::Csv) {
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      out << (c ? "," : "") << csv_escape(report.columns[c]);
    }
    out << '\n';
    for (const auto& row : report.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_escape(cell_text(row[c]));
      out << '\n';
    }
    return out.str();
  }

  std::vector<std::size_t> width(report.columns.size());
  for (std::size_t c = 0; c < report.columns.size(); ++c) width[c] = report.columns[c].size();
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : report.rows) {
    auto& texts = cells.emplace_back();
    for (std::size_t c = 0; c < row.size(); ++c) {
      texts.push_back(cell_text(row[c]));
      width[c] = std::max(width[c], texts.back().size());
    }
  }
  auto emit = [&](const std::vector<std::string>& texts) {
    for (std::size_t c = 0; c < texts.size(); ++c) {
      out << texts[c];
      if (c + 1 < texts.size()) out << std::string(width[c] - texts[c].size() + 2, ' ');
    }
    out << '\n';
  };
  emit(report.columns);
  for (const auto& texts : cells) emit(texts);
  return out.str();
}

}  // namespace lnprobe
