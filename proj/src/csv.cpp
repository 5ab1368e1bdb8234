#include "eslasso/csv.hpp"

#include "eslasso/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace eslasso {

std::optional<std::size_t> CsvTable::find(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::require(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw DataError("missing column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      record.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw DataError("CSV input has no header");
  CsvTable table;
  table.header = std::move(records.front());
  for (auto& h : table.header) {
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.back()))) h.pop_back();
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.front()))) h.erase(h.begin());
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataError("row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::optional<double> parse_number(const std::string& field) {
  std::size_t b = 0, e = field.size();
  while (b < e && std::isspace(static_cast<unsigned char>(field[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(field[e - 1]))) --e;
  if (b == e) return std::nullopt;
  std::string s = field.substr(b, e - b);
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "na" || lower == "nan" || lower == "null" || lower == ".") return std::nullopt;
  if (s.front() == '+') s.erase(s.begin());
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("not a number: '" + field + "'");
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
      out << f;
    } else {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    }
  }
  out << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv_row(out, header);
  for (const auto& r : rows) write_csv_row(out, r);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw InvalidArgument("header width does not match matrix");
  }
  std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(format_number(values(i, j)));
  }
  write_csv(path, header, rows);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header) {
  CsvTable t = read_csv(path);
  bool headerless = !t.header.empty();
  for (const std::string& h : t.header) {
    try {
      if (!parse_number(h)) headerless = false;
    } catch (const DataError&) {
      headerless = false;
    }
  }
  if (headerless) {
    t.rows.insert(t.rows.begin(), t.header);
    for (std::size_t j = 0; j < t.header.size(); ++j) t.header[j] = "column_" + std::to_string(j + 1);
  }
  const std::size_t skip = headerless ? 1 : 2;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      std::optional<double> v;
      try {
        v = parse_number(t.rows[i][j]);
      } catch (const DataError& e) {
        throw DataError(path.string() + ": row " + std::to_string(i + skip) + ": " + e.what());
      }
      if (!v) {
        throw DataError(path.string() + ": missing value in row " + std::to_string(i + skip) + ", column '" +
                        t.header[j] + "'");
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  if (header) *header = t.header;
  return m;
}

}  // namespace eslasso
