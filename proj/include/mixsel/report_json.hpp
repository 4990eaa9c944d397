#pragma once

#include <string>

#include <json.hpp>

#include "mixsel/selection.hpp"

namespace mixsel {

inline constexpr const char* kReportSchemaVersion = "1";
inline constexpr const char* kLibraryVersion = "0.1.0";

nlohmann::ordered_json report_to_json(const SelectionReport& report);

// Writes the document with a trailing newline; byte-stable for a fixed report.
void write_report(const std::string& path, const SelectionReport& report);

// Minimal structural check against the shape documented in docs/report_schema.json.
// Returns an empty string when valid, else a description of the first problem.
std::string validate_report_json(const nlohmann::json& doc);

// What cmd_contours needs back from a report file.
struct LoadedEstimate {
  ModelSpec spec;
  MixtureParams params;  // standardized scale
};
struct LoadedReport {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  std::vector<std::pair<std::string, LoadedEstimate>> estimates;  // method -> estimate
};
LoadedReport load_report(const std::string& path);

}  // namespace mixsel
