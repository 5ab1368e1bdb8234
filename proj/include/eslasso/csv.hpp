#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace eslasso {

/// A parsed comma-separated file. Fields are kept as text; quoting follows
/// RFC 4180 (double quotes, doubled to escape).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Position of a header name, or nothing.
  std::optional<std::size_t> find(const std::string& name) const;
  /// Position of a header name; throws DataError naming the column if absent.
  std::size_t require(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
/// Throws DataError if the file cannot be opened or a row has the wrong width.
CsvTable read_csv(const std::filesystem::path& path);

/// Parses a numeric field. Empty fields and NA/NaN spellings give nothing;
/// anything else that is not a number throws DataError.
std::optional<double> parse_number(const std::string& field);

/// Shortest text that reads back to the same double.
std::string format_number(double v);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Writes a numeric matrix with the given header (one name per column).
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values);

/// Reads an all-numeric CSV into a matrix; throws DataError on missing values.
/// A first row made entirely of numbers is treated as data (headerless file),
/// in which case `header` receives column_1, column_2, ...
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

}  // namespace eslasso
