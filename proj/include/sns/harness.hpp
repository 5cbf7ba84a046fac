#pragma once

// Experiment driver: warm-up, ALS initialization, timed replay with periodic
// fitness samples, parameter sweeps and the anomaly-detection task.
//
// Warm-up ingests every tuple with time < t0 + warmup_window_count * W * T,
// where t0 is the first timestamp, and drains the scheduled updates up to
// one tick before that boundary. The replay then starts at that tick (S) and
// ends at S + run_duration * W * T. Samples are taken at S + k * interval
// after all events due at that time have been processed.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sns/cpd_state.hpp"
#include "sns/stream_io.hpp"
#include "sns/updates.hpp"

namespace sns {

struct SeriesPoint {
  Timestamp clock = 0;
  double fitness = 0.0;
  std::optional<double> als_fitness;
  std::optional<double> relative_fitness;
  std::uint64_t cumulative_events = 0;
  std::optional<double> elapsed_ns_mean;  // over the events since the previous sample

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

struct ExperimentSummary {
  double warmup_fitness = 0.0;
  std::optional<double> final_fitness;
  std::optional<double> avg_relative_fitness;
  std::uint64_t tuples = 0;
  std::uint64_t events = 0;
  std::uint64_t window_nnz = 0;
  std::optional<double> latency_mean_ns;
  std::optional<double> latency_p50_ns;
  std::optional<double> latency_p95_ns;
  std::optional<double> total_runtime_seconds;
  UpdateStats update_stats;

  friend bool operator==(const ExperimentSummary&, const ExperimentSummary&) = default;
};

struct ExperimentReport {
  static constexpr int kSchemaVersion = 1;
  RunConfig config;
  std::vector<SeriesPoint> series;
  ExperimentSummary summary;
};

struct RunOptions {
  bool include_timing = true;
  bool sample_fitness = true;
  bool oracle = true;  // fresh ALS at each sample for relative fitness
  // When non-null, oracle fitness values are read from here if present and
  // appended otherwise, so sweeps over one stream pay for ALS once.
  std::vector<double>* oracle_cache = nullptr;
  std::function<void(const SeriesPoint&)> progress;
};

ExperimentReport run_experiment(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                const RunOptions& options = {});

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
// Ordinary least squares; nullopt for fewer than two distinct x values.
std::optional<LineFit> fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct ScalePoint {
  std::size_t tuples = 0;
  std::uint64_t events = 0;
  double runtime_seconds = 0.0;
};

struct ScalabilityResult {
  std::vector<ScalePoint> points;
  std::optional<double> slope;  // of log runtime against log events
};

// Replays each stream in full (no fitness sampling) and times the replay.
ScalabilityResult scalability_sweep(const std::vector<std::vector<TimestampedTuple>>& streams,
                                    const RunConfig& config);

struct ThetaPoint {
  Index theta = 0;
  std::optional<double> avg_relative_fitness;
  double latency_mean_ns = 0.0;
};

std::vector<ThetaPoint> theta_sweep(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                    const std::vector<Index>& thetas);

struct AnomalyOptions {
  std::size_t count = 20;          // injections, also k of precision@k
  double magnitude_factor = 5.0;   // times the largest change seen during warm-up
  std::uint64_t seed = 0;
  std::size_t stats_window = 10000;
  std::size_t min_history = 30;
  bool unit_scan = true;  // feed every entry of the newest unit at unit boundaries
  bool include_timing = true;
};

struct Injection {
  Coordinate coord;  // full coordinate, time index W-1
  Timestamp time = 0;
  double magnitude = 0.0;
  std::uint64_t event_index = 0;
};

struct Detection {
  Coordinate coord;
  Timestamp time = 0;
  double z_score = 0.0;
  std::uint64_t event_index = 0;
  bool injected = false;
  std::optional<double> latency_seconds;  // injection to score, true positives only
};

struct AnomalyRecord {
  std::vector<Injection> injected;
  std::vector<Detection> detections;  // top-k by z-score, descending
  double max_warmup_change = 0.0;
  double precision_at_k = 0.0;
  // Stream-time distance from injection to detection over true positives.
  std::optional<double> mean_latency_time_units;
  std::optional<double> mean_latency_seconds;
  std::uint64_t scored_events = 0;
};

// Residual z-scores of the changed entry after every arrival, against a
// sliding window of recent absolute residuals.
AnomalyRecord inject_and_detect(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                const AnomalyOptions& options);

}  // namespace sns
