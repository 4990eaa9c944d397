#include "mixsel/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mixsel/errors.hpp"

namespace mixsel {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

CsvData read_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open file: " + path);

  CsvData out;
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  size_t ncol = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (has_header && out.header.empty() && rows.empty()) {
      for (const std::string& c : cells) out.header.push_back(trim(c));
      ncol = cells.size();
      continue;
    }
    if (ncol == 0) ncol = cells.size();
    if (cells.size() != ncol) {
      throw DomainError("row " + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                        " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> row(ncol);
    for (size_t c = 0; c < ncol; ++c) {
      const std::string cell = trim(cells[c]);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DomainError("row " + std::to_string(lineno) + ", column " + std::to_string(c + 1) +
                          ": cannot parse '" + cell + "' as a number");
      }
      row[c] = value;
    }
    rows.push_back(std::move(row));
  }
  out.values.resize(rows.size(), ncol);
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < ncol; ++c) out.values(r, c) = rows[r][c];
  return out;
}

void write_csv(const std::string& path, const Eigen::MatrixXd& values,
               const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open file for writing: " + path);
  out.precision(17);
  if (!header.empty()) {
    for (size_t i = 0; i < header.size(); ++i) {
      if (i) out << ',';
      out << header[i];
    }
    out << '\n';
  }
  for (int r = 0; r < values.rows(); ++r) {
    for (int c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      out << values(r, c);
    }
    out << '\n';
  }
}

}  // namespace mixsel
