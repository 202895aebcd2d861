#include "multirfm/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace multirfm::io {

namespace {

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  if (first == last) return false;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool ok = true;
    for (const std::string& cell : split_row(line)) {
      double value = 0.0;
      if (!parse_double(cell, value)) {
        ok = false;
        break;
      }
      row.push_back(value);
    }
    if (!ok) {
      if (first_line) {
        first_line = false;
        continue;  // header row
      }
      throw std::invalid_argument("non-numeric cell in " + path);
    }
    first_line = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("ragged csv row in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("empty csv: " + path);

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_csv_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) line += ',';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("cannot write file: " + path);
}

Vector read_csv_vector(const std::string& path) {
  const Matrix m = read_csv_matrix(path);
  if (m.cols() != 1) throw std::invalid_argument("expected a single-column file: " + path);
  return m.col(0);
}

void write_csv_vector(const std::string& path, const Vector& v) {
  write_csv_matrix(path, v);
}

}  // namespace multirfm::io
