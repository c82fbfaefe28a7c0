#include <cmath>
#include <cstdio>
#include <functional>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/runner/runner.hpp"

namespace rsvqa::runner {

namespace {

struct Column {
  const char* name;
  bool lower_is_better;
  std::function<std::optional<double>(const eval::MetricsReport&)> get;
};

const std::vector<Column>& all_columns() {
  using R = eval::MetricsReport;
  static const std::vector<Column> columns{
      {"HD", true, [](const R& r) { return r.classification ? std::optional(r.classification->hd) : std::nullopt; }},
      {"MR", false, [](const R& r) { return r.classification ? std::optional(r.classification->mr) : std::nullopt; }},
      {"F1-micro", false,
       [](const R& r) { return r.classification ? std::optional(r.classification->f1_micro) : std::nullopt; }},
      {"F1-avg", false,
       [](const R& r) { return r.classification ? std::optional(r.classification->f1_average) : std::nullopt; }},
      {"Acc yes/no", false, [](const R& r) { return r.vqa ? r.vqa->yes_no : std::nullopt; }},
      {"Acc land cover", false, [](const R& r) { return r.vqa ? r.vqa->land_cover : std::nullopt; }},
      {"Acc overall", false, [](const R& r) { return r.vqa ? r.vqa->overall : std::nullopt; }},
  };
  return columns;
}

constexpr double kTieTolerance = 1e-12;

std::string format_cell(const std::optional<double>& v, bool percent) {
  if (!v) return "-";
  char buf[32];
  if (percent) {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", *v);
  }
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ComparisonTable compare_reports(const std::vector<eval::MetricsReport>& reports) {
  if (reports.size() < 2) throw InvalidInput("compare needs at least two reports");
  for (const auto& r : reports) {
    if (r.dataset_hash != reports.front().dataset_hash) {
      throw DataError("reports '" + reports.front().model + "' and '" + r.model + "' come from different datasets");
    }
    if (r.split != reports.front().split) {
      throw DataError("reports '" + reports.front().model + "' and '" + r.model + "' cover different splits");
    }
  }
  ComparisonTable table;
  std::vector<const Column*> used;
  for (const auto& c : all_columns()) {
    for (const auto& r : reports) {
      if (c.get(r)) {
        used.push_back(&c);
        break;
      }
    }
  }
  for (const auto* c : used) table.columns.push_back(c->name);
  for (const auto& r : reports) {
    table.models.push_back(r.model);
    auto& row = table.values.emplace_back();
    for (const auto* c : used) row.push_back(c->get(r));
  }
  table.best.assign(reports.size(), std::vector<bool>(used.size(), false));
  for (std::size_t k = 0; k < used.size(); ++k) {
    std::optional<double> best;
    for (const auto& row : table.values) {
      if (!row[k]) continue;
      if (!best || (used[k]->lower_is_better ? *row[k] < *best : *row[k] > *best)) best = row[k];
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
      table.best[i][k] = best && table.values[i][k] && std::abs(*table.values[i][k] - *best) <= kTieTolerance;
    }
  }
  return table;
}

std::string ComparisonTable::text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"model"};
  for (const auto& c : columns) header.push_back(c == "HD" ? c : c + " (%)");
  cells.push_back(header);
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::vector<std::string> row{models[i]};
    for (std::size_t k = 0; k < columns.size(); ++k) {
      row.push_back(format_cell(values[i][k], columns[k] != "HD") + (best[i][k] ? "*" : ""));
    }
    cells.push_back(row);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], row[k].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t k = 0; k < cells[r].size(); ++k) {
      const auto& s = cells[r][k];
      const std::string pad(widths[k] - s.size(), ' ');
      out += k == 0 ? s + pad : "  " + pad + s;
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  out += "* best in column (ties marked on every tied row)\n";
  return out;
}

std::string ComparisonTable::csv() const {
  std::string out = "model";
  for (const auto& c : columns) out += "," + csv_field(c);
  out += ",best\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    out += csv_field(models[i]);
    std::string best_columns;
    for (std::size_t k = 0; k < columns.size(); ++k) {
      char buf[32] = "";
      if (values[i][k]) std::snprintf(buf, sizeof buf, "%.17g", *values[i][k]);
      out += std::string(",") + buf;
      if (best[i][k]) best_columns += (best_columns.empty() ? "" : ";") + columns[k];
    }
    out += "," + csv_field(best_columns) + "\n";
  }
  return out;
}

}  // namespace rsvqa::runner
