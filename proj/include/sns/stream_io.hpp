#pragma once

// Event files, synthetic streams and run configuration.
//
// Event CSV: a header row, then one tuple per line as
//   timestamp,index_1,...,index_{M-1},value
// with 1-based indices and non-decreasing integer timestamps. Tuples are
// handed to the rest of the library with 0-based indices.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sns/stream_window.hpp"
#include "sns/updates.hpp"

namespace sns {

class EventReader {
 public:
  // `mode_lengths` bounds the non-time indices; empty means only the column
  // count is taken from the header and indices are checked to be >= 1.
  EventReader(std::istream& in, std::vector<Index> mode_lengths = {});

  std::optional<TimestampedTuple> next();

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t index_columns() const noexcept { return index_columns_; }
  long line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::vector<Index> mode_lengths_;
  std::vector<std::string> header_;
  std::size_t index_columns_ = 0;
  long line_ = 0;
  std::optional<Timestamp> last_time_;
};

std::vector<TimestampedTuple> parse_events(std::istream& in, const std::vector<Index>& mode_lengths = {});
std::vector<TimestampedTuple> parse_events(const std::string& path,
                                           const std::vector<Index>& mode_lengths = {});

// Writes the CSV format above. Values use the shortest representation that
// parses back to the same double.
void write_events(std::ostream& out, const std::vector<TimestampedTuple>& tuples,
                  std::size_t index_columns);

// Largest index seen per non-time mode (as a length, so max 0-based index + 1).
std::vector<Index> infer_mode_lengths(const std::vector<TimestampedTuple>& tuples);

struct SynthParams {
  std::vector<Index> mode_lengths{40, 40};
  std::size_t num_tuples = 10000;

  // Unstructured mode: geometric gaps (mean `mean_gap` time units, zero gaps
  // allowed), independent indices, values uniform in [1, value_max].
  double mean_gap = 1.0;
  bool power_law = false;
  double power_exponent = 1.2;  // P(i) proportional to (i + 1)^-exponent
  double value_max = 10.0;
  bool integer_values = true;

  // Planted mode (planted_rank > 0): the coordinates of a product of
  // per-mode active index subsets each emit once per `period`, at a fixed
  // random phase, with value sum_r prod_m F_m(i_m, r) * (1 + noise * eps),
  // eps standard normal truncated to [-3, 3]. A window covering whole
  // periods is then exactly of CP rank <= planted_rank when noise is 0.
  int planted_rank = 0;
  std::vector<Index> active_per_mode;  // defaults to all indices
  Timestamp period = 100;
  double noise = 0.0;

  Timestamp start_time = 0;
};

class SynthStream {
 public:
  SynthStream(SynthParams params, std::uint64_t seed);
  std::optional<TimestampedTuple> next();

 private:
  TimestampedTuple unstructured();
  TimestampedTuple planted();

  SynthParams params_;
  std::mt19937_64 rng_;
  std::size_t produced_ = 0;
  Timestamp clock_ = 0;
  std::vector<std::discrete_distribution<Index>> skewed_;
  // Planted mode.
  std::vector<Coordinate> active_;
  std::vector<double> base_value_;
  std::vector<Timestamp> phase_;
  std::size_t cursor_ = 0;
  Timestamp period_start_ = 0;
};

std::vector<TimestampedTuple> synth_stream(const SynthParams& params, std::uint64_t seed);

struct RunConfig {
  Eigen::Index rank = 20;
  Index window = 10;
  Timestamp period = 0;  // required
  Index theta = 20;
  double eta = 1000.0;
  Algorithm algorithm = Algorithm::kRndPlus;
  std::uint64_t seed = 0;
  int init_sweeps = 100;
  double init_tolerance = 1e-4;
  Index warmup_window_count = 1;
  double run_duration = 5.0;  // in units of W*T
  Timestamp report_interval = 0;  // 0 means W*T
  int oracle_sweeps = 100;
  std::vector<Index> mode_lengths;  // optional, inferred from the events if empty

  nlohmann::json source;  // the document as given, echoed into reports

  Timestamp window_span() const { return static_cast<Timestamp>(window) * period; }
  Timestamp effective_report_interval() const {
    return report_interval > 0 ? report_interval : window_span();
  }
  UpdateConfig update_config() const { return {algorithm, theta, eta, seed}; }
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

// Half the average degree over the non-time modes' non-empty indices,
// rounded down and at least 1.
Index suggest_theta(const SparseWindow& window);

}  // namespace sns
