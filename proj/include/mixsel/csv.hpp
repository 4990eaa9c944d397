#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixsel {

struct CsvData {
  Eigen::MatrixXd values;
  std::vector<std::string> header;  // empty when the file had none
};

// Comma-separated numeric file, '.' decimal separator, optional header row.
// Throws DomainError with a row/column diagnostic on any unparseable cell.
CsvData read_csv(const std::string& path, bool has_header);

void write_csv(const std::string& path, const Eigen::MatrixXd& values,
               const std::vector<std::string>& header = {});

}  // namespace mixsel
