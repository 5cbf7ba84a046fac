#pragma once

// Report serialization. The series goes to CSV, one row per sample; the
// summary goes to JSON with a schema_version field. Optional values are
// written as empty CSV cells and JSON null. Key order is fixed.

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "sns/harness.hpp"

namespace sns {

enum class ReportFormat { kCsv, kJson, kBoth };

void write_series_csv(std::ostream& out, const ExperimentReport& report);
nlohmann::ordered_json summary_json(const ExperimentReport& report);

// Reads back what summary_json wrote.
ExperimentSummary parse_summary(const nlohmann::json& doc);

// Writes <dir>/series.csv and/or <dir>/summary.json, creating `dir`.
void emit_report(const ExperimentReport& report, const std::string& dir, ReportFormat format);

nlohmann::ordered_json anomaly_json(const AnomalyRecord& record);

}  // namespace sns
