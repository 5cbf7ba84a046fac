#include "sns/report.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "sns/error.hpp"

namespace sns {

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string cell(const std::optional<double>& v) { return v ? shortest(*v) : std::string(); }

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string coordinate_text(const Coordinate& c) {
  std::string s;
  for (std::size_t m = 0; m < c.size(); ++m) {
    if (m) s += ',';
    s += std::to_string(c[m] + 1);
  }
  return s;
}

}  // namespace

void write_series_csv(std::ostream& out, const ExperimentReport& report) {
  out << "clock,fitness,als_fitness,relative_fitness,cumulative_events,elapsed_ns_mean\n";
  for (const auto& p : report.series) {
    out << p.clock << ',' << shortest(p.fitness) << ',' << cell(p.als_fitness) << ','
        << cell(p.relative_fitness) << ',' << p.cumulative_events << ',' << cell(p.elapsed_ns_mean) << '\n';
  }
}

nlohmann::ordered_json summary_json(const ExperimentReport& report) {
  const auto& s = report.summary;
  nlohmann::ordered_json j;
  j["schema_version"] = ExperimentReport::kSchemaVersion;
  j["algorithm"] = std::string(to_string(report.config.algorithm));
  j["seed"] = report.config.seed;
  j["config"] = report.config.source.is_null() ? to_json(report.config) : report.config.source;
  j["series_length"] = report.series.size();
  nlohmann::ordered_json sum;
  sum["warmup_fitness"] = s.warmup_fitness;
  sum["final_fitness"] = optional_json(s.final_fitness);
  sum["avg_relative_fitness"] = optional_json(s.avg_relative_fitness);
  sum["tuples"] = s.tuples;
  sum["events"] = s.events;
  sum["window_nnz"] = s.window_nnz;
  sum["latency_mean_ns"] = optional_json(s.latency_mean_ns);
  sum["latency_p50_ns"] = optional_json(s.latency_p50_ns);
  sum["latency_p95_ns"] = optional_json(s.latency_p95_ns);
  sum["total_runtime_seconds"] = optional_json(s.total_runtime_seconds);
  nlohmann::ordered_json stats;
  stats["exact_rows"] = s.update_stats.exact_rows;
  stats["sampled_rows"] = s.update_stats.sampled_rows;
  stats["clipped_entries"] = s.update_stats.clipped_entries;
  stats["zero_denominator_skips"] = s.update_stats.zero_denominator_skips;
  stats["events"] = s.update_stats.events;
  sum["update_stats"] = stats;
  j["summary"] = sum;
  return j;
}

ExperimentSummary parse_summary(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != ExperimentReport::kSchemaVersion) {
      throw Error(ErrorCode::kParseError, "unsupported report schema_version");
    }
    const auto& sum = doc.at("summary");
    ExperimentSummary s;
    s.warmup_fitness = sum.at("warmup_fitness").get<double>();
    s.final_fitness = optional_from(sum, "final_fitness");
    s.avg_relative_fitness = optional_from(sum, "avg_relative_fitness");
    s.tuples = sum.at("tuples").get<std::uint64_t>();
    s.events = sum.at("events").get<std::uint64_t>();
    s.window_nnz = sum.at("window_nnz").get<std::uint64_t>();
    s.latency_mean_ns = optional_from(sum, "latency_mean_ns");
    s.latency_p50_ns = optional_from(sum, "latency_p50_ns");
    s.latency_p95_ns = optional_from(sum, "latency_p95_ns");
    s.total_runtime_seconds = optional_from(sum, "total_runtime_seconds");
    const auto& st = sum.at("update_stats");
    s.update_stats.exact_rows = st.at("exact_rows").get<std::uint64_t>();
    s.update_stats.sampled_rows = st.at("sampled_rows").get<std::uint64_t>();
    s.update_stats.clipped_entries = st.at("clipped_entries").get<std::uint64_t>();
    s.update_stats.zero_denominator_skips = st.at("zero_denominator_skips").get<std::uint64_t>();
    s.update_stats.events = st.at("events").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed report summary: ") + e.what());
  }
}

void emit_report(const ExperimentReport& report, const std::string& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  if (format != ReportFormat::kJson) {
    std::ofstream out(base / "series.csv", std::ios::binary);
    write_series_csv(out, report);
    if (!out) throw Error(ErrorCode::kIoError, "failed to write series.csv in " + dir);
  }
  if (format != ReportFormat::kCsv) {
    std::ofstream out(base / "summary.json", std::ios::binary);
    out << summary_json(report).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "failed to write summary.json in " + dir);
  }
}

nlohmann::ordered_json anomaly_json(const AnomalyRecord& record) {
  nlohmann::ordered_json j;
  j["schema_version"] = ExperimentReport::kSchemaVersion;
  j["max_warmup_change"] = record.max_warmup_change;
  j["precision_at_k"] = record.precision_at_k;
  j["mean_latency_time_units"] = optional_json(record.mean_latency_time_units);
  j["mean_latency_seconds"] = optional_json(record.mean_latency_seconds);
  j["scored_events"] = record.scored_events;
  auto& inj = j["injected"] = nlohmann::ordered_json::array();
  for (const auto& i : record.injected) {
    nlohmann::ordered_json e;
    e["coordinate"] = coordinate_text(i.coord);
    e["time"] = i.time;
    e["magnitude"] = i.magnitude;
    e["event_index"] = i.event_index;
    inj.push_back(e);
  }
  auto& det = j["detections"] = nlohmann::ordered_json::array();
  for (const auto& d : record.detections) {
    nlohmann::ordered_json e;
    e["coordinate"] = coordinate_text(d.coord);
    e["time"] = d.time;
    e["z_score"] = d.z_score;
    e["event_index"] = d.event_index;
    e["injected"] = d.injected;
    e["latency_seconds"] = optional_json(d.latency_seconds);
    det.push_back(e);
  }
  return j;
}

}  // namespace sns
