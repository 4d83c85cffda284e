#pragma once

#include <string>
#include <vector>

namespace ff {

/// A parsed numeric table. The label column, when requested at load time, is
/// split out of the feature matrix.
struct RawTable {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;  // n_rows x feature_names.size()
  std::vector<double> labels;             // empty when no label column
  std::string label_name;                 // empty when none

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_features() const { return feature_names.size(); }
};

/// Loads a comma-separated file with a header row. Every data cell must parse
/// as a finite decimal number (scientific notation accepted). When
/// `label_column` is non-empty that column is extracted into `labels`.
///
/// Throws DataError on: missing file, missing label column, header-only file,
/// ragged rows, duplicate column names, or a non-numeric cell (the error
/// names the 1-based data row and the column).
RawTable load_csv(const std::string& path, const std::string& label_column);

/// Writes a table back to disk in the same dialect load_csv reads.
void write_csv(const std::string& path, const RawTable& table);

/// Shortest-round-trip decimal rendering of a double; used by every writer so
/// identical values always serialize identically.
std::string format_double(double value);

}  // namespace ff
