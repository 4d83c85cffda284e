#include "ff/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ff/errors.hpp"

namespace ff {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

}  // namespace

RawTable load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("empty csv file: " + path);
  // Tolerate a UTF-8 BOM on the first line.
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);
  }

  std::vector<std::string> names;
  for (const auto& cell : split_line(header_line)) names.push_back(trim(cell));
  if (names.empty()) throw DataError("empty header row in " + path);

  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw DataError("duplicate column name '" + n + "' in " + path);
  }

  std::ptrdiff_t label_idx = -1;
  if (!label_column.empty()) {
    auto it = std::find(names.begin(), names.end(), label_column);
    if (it == names.end()) {
      throw DataError("label column '" + label_column + "' not found in " + path);
    }
    label_idx = it - names.begin();
  }

  RawTable table;
  table.label_name = label_column;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) != label_idx) table.feature_names.push_back(names[c]);
  }

  std::string line;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_row;
    const auto cells = split_line(line);
    if (cells.size() != names.size()) {
      throw DataError("row " + std::to_string(data_row) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(names.size()) + " in " + path);
    }
    std::vector<double> row;
    row.reserve(table.feature_names.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0;
      const std::string cell = trim(cells[c]);
      if (!parse_double(cell, v)) {
        throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(data_row) +
                        ", column '" + names[c] + "' in " + path);
      }
      if (static_cast<std::ptrdiff_t>(c) == label_idx) {
        table.labels.push_back(v);
      } else {
        row.push_back(v);
      }
    }
    table.rows.push_back(std::move(row));
  }

  if (table.rows.empty()) throw DataError("no rows in " + path);
  return table;
}

void write_csv(const std::string& path, const RawTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv file: " + path);
  for (std::size_t c = 0; c < table.feature_names.size(); ++c) {
    if (c) out << ',';
    out << table.feature_names[c];
  }
  const bool has_label = !table.label_name.empty();
  if (has_label) out << ',' << table.label_name;
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < table.rows[r].size(); ++c) {
      if (c) out << ',';
      out << format_double(table.rows[r][c]);
    }
    if (has_label) out << ',' << format_double(table.labels[r]);
    out << '\n';
  }
}

std::string format_double(double value) {
  // Shortest representation that round-trips exactly.
  for (int precision = 1; precision <= 17; ++precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    double back = 0;
    std::sscanf(buf, "%lf", &back);
    if (back == value) return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace ff
