#include "sns/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "sns/error.hpp"
#include "sns/kernels.hpp"

namespace sns {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Setup {
  StreamWindow stream;
  std::size_t next_tuple = 0;
  Timestamp start = 0;  // replay starts right after this tick
};

std::vector<Index> resolve_mode_lengths(const std::vector<TimestampedTuple>& stream,
                                        const RunConfig& config) {
  if (!config.mode_lengths.empty()) return config.mode_lengths;
  return infer_mode_lengths(stream);
}

Setup warm_up(const std::vector<TimestampedTuple>& stream, const RunConfig& config) {
  if (config.period < 1) throw Error(ErrorCode::kRangeError, "period T must be >= 1");
  if (stream.empty()) throw Error(ErrorCode::kInsufficientWarmup, "stream is empty");
  auto dims = resolve_mode_lengths(stream, config);
  const Timestamp span = static_cast<Timestamp>(config.warmup_window_count) * config.window_span();
  const Timestamp first = stream.front().time;
  const Timestamp boundary = first + span;
  if (stream.back().time < boundary - config.period) {
    throw Error(ErrorCode::kInsufficientWarmup,
                "stream ends at " + std::to_string(stream.back().time) +
                    " before the warm-up window is filled (needs " +
                    std::to_string(boundary - config.period) + ")");
  }
  Setup s{StreamWindow(std::move(dims), config.period, config.window), 0, boundary - 1};
  while (s.next_tuple < stream.size() && stream[s.next_tuple].time < boundary) {
    s.stream.ingest(stream[s.next_tuple++]);
  }
  s.stream.advance_clock(s.start);
  if (s.stream.window().nnz() == 0) {
    throw Error(ErrorCode::kInsufficientWarmup, "warm-up window has no non-zeros");
  }
  return s;
}

AlsOptions init_options(const RunConfig& config) {
  return {config.init_sweeps, config.init_tolerance};
}

CpdState initial_state(const SparseWindow& window, const RunConfig& config) {
  CpdState state = als_fit(window, config.rank, config.seed, init_options(config)).state;
  if (config.algorithm == Algorithm::kMat) normalize_into_weights(state);
  else balance_columns(state);
  return state;
}

double oracle_fitness(const SparseWindow& window, const RunConfig& config) {
  AlsOptions opts{config.oracle_sweeps, config.init_tolerance};
  const AlsResult r = als_fit(window, config.rank, config.seed, opts);
  return fitness(window, r.state.factors, nullptr).value;
}

double percentile(std::vector<double> values, double q) {
  const auto k = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1) + 0.5);
  std::nth_element(values.begin(), values.begin() + static_cast<long>(k), values.end());
  return values[k];
}

// Mean and standard deviation over the most recent `capacity` values.
class SlidingStats {
 public:
  explicit SlidingStats(std::size_t capacity) : capacity_(capacity) {}

  void push(double x) {
    if (capacity_ == 0) return;
    if (values_.size() == capacity_) {
      remove(values_.front());
      values_.pop_front();
    }
    values_.push_back(x);
    const double n = static_cast<double>(values_.size());
    const double d = x - mean_;
    mean_ += d / n;
    m2_ += d * (x - mean_);
  }

  std::size_t size() const noexcept { return values_.size(); }
  double mean() const noexcept { return mean_; }
  double stddev() const noexcept {
    if (values_.size() < 2) return 0.0;
    return std::sqrt(std::max(0.0, m2_) / static_cast<double>(values_.size() - 1));
  }

 private:
  void remove(double x) {
    const double n = static_cast<double>(values_.size() - 1);
    if (n == 0) {
      mean_ = 0.0;
      m2_ = 0.0;
      return;
    }
    const double d = x - mean_;
    mean_ -= d / n;
    m2_ -= d * (x - mean_);
  }

  std::size_t capacity_;
  std::deque<double> values_;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace

ExperimentReport run_experiment(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                const RunOptions& options) {
  Setup setup = warm_up(stream, config);
  StreamWindow& sw = setup.stream;
  CpdState state = initial_state(sw.window(), config);
  Updater updater(config.update_config());

  ExperimentReport report;
  report.config = config;
  report.summary.warmup_fitness = fitness(sw.window(), state).value;

  std::vector<double> latencies;
  std::uint64_t events = 0;
  std::size_t since_sample = 0;
  auto sink = [&](const DeltaChange& delta) {
    if (options.include_timing) {
      const auto t0 = Clock::now();
      updater.dispatch_event(delta, sw.window(), state);
      latencies.push_back(std::chrono::duration<double, std::nano>(Clock::now() - t0).count());
    } else {
      updater.dispatch_event(delta, sw.window(), state);
    }
    ++events;
  };

  const Timestamp end = setup.start + std::llround(config.run_duration *
                                                   static_cast<double>(config.window_span()));
  const Timestamp interval = config.effective_report_interval();
  Timestamp next_sample = setup.start + interval;
  std::size_t sample_index = 0;
  double sampling_seconds = 0.0;
  std::vector<double> relative;

  auto take_sample = [&](Timestamp at) {
    const auto t0 = Clock::now();
    SeriesPoint p;
    p.clock = at;
    p.fitness = fitness(sw.window(), state).value;
    if (options.oracle && config.oracle_sweeps > 0) {
      double als = 0.0;
      if (options.oracle_cache != nullptr && sample_index < options.oracle_cache->size()) {
        als = (*options.oracle_cache)[sample_index];
      } else {
        als = oracle_fitness(sw.window(), config);
        if (options.oracle_cache != nullptr) options.oracle_cache->push_back(als);
      }
      p.als_fitness = als;
      p.relative_fitness = relative_fitness(p.fitness, als);
      if (p.relative_fitness) relative.push_back(*p.relative_fitness);
    }
    p.cumulative_events = events;
    if (options.include_timing && latencies.size() > since_sample) {
      const double sum = std::accumulate(latencies.begin() + static_cast<long>(since_sample), latencies.end(), 0.0);
      p.elapsed_ns_mean = sum / static_cast<double>(latencies.size() - since_sample);
    }
    since_sample = latencies.size();
    ++sample_index;
    report.series.push_back(p);
    if (options.progress) options.progress(p);
    sampling_seconds += seconds_since(t0);
  };

  const auto loop_start = Clock::now();
  std::size_t i = setup.next_tuple;
  std::uint64_t tuples = 0;
  while (true) {
    const bool have_tuple = i < stream.size() && stream[i].time <= end;
    const bool sample_due = options.sample_fitness && next_sample <= end &&
                            (!have_tuple || next_sample < stream[i].time);
    if (sample_due) {
      sw.advance_clock(next_sample, sink);
      take_sample(next_sample);
      next_sample += interval;
      continue;
    }
    if (!have_tuple) break;
    const DeltaChange arrival = sw.ingest(stream[i++], sink);
    sink(arrival);
    ++tuples;
  }
  if (sw.clock() < end) sw.advance_clock(end, sink);
  const double loop_seconds = seconds_since(loop_start) - sampling_seconds;

  auto& s = report.summary;
  s.tuples = tuples;
  s.events = events;
  s.window_nnz = sw.window().nnz();
  s.update_stats = updater.stats();
  if (!report.series.empty()) s.final_fitness = report.series.back().fitness;
  if (!relative.empty()) {
    s.avg_relative_fitness = std::accumulate(relative.begin(), relative.end(), 0.0) /
                             static_cast<double>(relative.size());
  }
  if (options.include_timing) {
    s.total_runtime_seconds = loop_seconds;
    if (!latencies.empty()) {
      s.latency_mean_ns = std::accumulate(latencies.begin(), latencies.end(), 0.0) /
                          static_cast<double>(latencies.size());
      s.latency_p50_ns = percentile(latencies, 0.50);
      s.latency_p95_ns = percentile(latencies, 0.95);
    }
  }
  return report;
}

std::optional<LineFit> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

ScalabilityResult scalability_sweep(const std::vector<std::vector<TimestampedTuple>>& streams,
                                    const RunConfig& config) {
  ScalabilityResult result;
  std::vector<double> log_events, log_runtime;
  for (const auto& stream : streams) {
    if (stream.empty()) continue;
    RunConfig c = config;
    // Long enough to drain every scheduled update of the last tuple.
    const double span = static_cast<double>(stream.back().time - stream.front().time);
    c.run_duration = span / static_cast<double>(config.window_span()) + 2.0;
    RunOptions opts;
    opts.sample_fitness = false;
    opts.oracle = false;
    const ExperimentReport r = run_experiment(stream, c, opts);
    ScalePoint p;
    p.tuples = stream.size();
    p.events = r.summary.events;
    p.runtime_seconds = r.summary.total_runtime_seconds.value_or(0.0);
    result.points.push_back(p);
    if (p.events > 0 && p.runtime_seconds > 0.0) {
      log_events.push_back(std::log(static_cast<double>(p.events)));
      log_runtime.push_back(std::log(p.runtime_seconds));
    }
  }
  if (auto f = fit_line(log_events, log_runtime)) result.slope = f->slope;
  return result;
}

std::vector<ThetaPoint> theta_sweep(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                    const std::vector<Index>& thetas) {
  std::vector<ThetaPoint> out;
  std::vector<double> oracle_cache;
  for (Index theta : thetas) {
    RunConfig c = config;
    c.theta = theta;
    RunOptions opts;
    opts.oracle_cache = &oracle_cache;
    const ExperimentReport r = run_experiment(stream, c, opts);
    out.push_back({theta, r.summary.avg_relative_fitness, r.summary.latency_mean_ns.value_or(0.0)});
  }
  return out;
}

AnomalyRecord inject_and_detect(const std::vector<TimestampedTuple>& stream, const RunConfig& config,
                                const AnomalyOptions& options) {
  AnomalyRecord record;
  Setup setup = warm_up(stream, config);
  StreamWindow& sw = setup.stream;

  // Largest aggregated change one (coordinate, timestamp) pair made during warm-up.
  {
    std::map<std::pair<Timestamp, Coordinate>, double> changes;
    for (std::size_t i = 0; i < setup.next_tuple; ++i) {
      changes[{stream[i].time, stream[i].indices}] += stream[i].value;
    }
    for (const auto& [key, v] : changes) record.max_warmup_change = std::max(record.max_warmup_change, std::abs(v));
  }

  CpdState state = initial_state(sw.window(), config);
  Updater updater(config.update_config());
  auto sink = [&](const DeltaChange& delta) { updater.dispatch_event(delta, sw.window(), state); };

  const Timestamp end = setup.start + std::llround(config.run_duration *
                                                   static_cast<double>(config.window_span()));
  std::size_t last = setup.next_tuple;
  while (last < stream.size() && stream[last].time <= end) ++last;
  const std::size_t available = last - setup.next_tuple;
  if (options.count > available) {
    throw Error(ErrorCode::kRangeError, "cannot place " + std::to_string(options.count) +
                                            " injections among " + std::to_string(available) + " tuples");
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> positions(available);
  std::iota(positions.begin(), positions.end(), setup.next_tuple);
  std::vector<std::size_t> chosen;
  std::sample(positions.begin(), positions.end(), std::back_inserter(chosen), options.count, rng);
  const double magnitude = options.magnitude_factor * record.max_warmup_change;
  const std::vector<Index>& dims = sw.mode_lengths();

  const Index newest = config.window - 1;
  SlidingStats stats(options.stats_window);
  std::vector<Detection> scored;

  auto residual = [&](const Coordinate& full) {
    const double x = sw.window().value(full);
    return std::abs(x - kernels::reconstruct_entry(state.factors, &state.weights, full));
  };
  auto score = [&](const TimestampedTuple& t, bool injected, Clock::time_point began) {
    const Coordinate full = t.indices.with_appended(newest);
    const double r = residual(full);
    const std::uint64_t index = record.scored_events++;
    const double sigma = stats.stddev();
    if (stats.size() >= options.min_history && sigma > 0.0) {
      Detection d;
      d.coord = full;
      d.time = t.time;
      d.z_score = (r - stats.mean()) / sigma;
      d.event_index = index;
      d.injected = injected;
      if (injected && options.include_timing) d.latency_seconds = seconds_since(began);
      scored.push_back(d);
    }
    stats.push(r);
    return index;
  };

  std::size_t next_chosen = 0;
  Timestamp unit = 0;
  for (std::size_t i = setup.next_tuple; i < last; ++i) {
    const TimestampedTuple& t = stream[i];
    const Timestamp this_unit = (t.time - setup.start - 1) / config.period;
    if (options.unit_scan && this_unit != unit) {
      sw.advance_clock(t.time - 1, sink);
      for (std::uint32_t slot : sw.window().registry(sw.window().order() - 1, newest)) {
        stats.push(residual(sw.window().entry(slot).coord));
      }
      unit = this_unit;
    }
    if (next_chosen < chosen.size() && chosen[next_chosen] == i) {
      ++next_chosen;
      TimestampedTuple fake;
      fake.time = t.time;
      fake.indices.order = static_cast<std::uint8_t>(dims.size());
      for (std::size_t m = 0; m < dims.size(); ++m) {
        std::uniform_int_distribution<Index> pick(0, dims[m] - 1);
        fake.indices[m] = pick(rng);
      }
      fake.value = magnitude;
      const auto began = Clock::now();
      const DeltaChange arrival = sw.ingest(fake, sink);
      sink(arrival);
      const auto index = score(fake, true, began);
      record.injected.push_back({fake.indices.with_appended(newest), fake.time, magnitude, index});
    }
    const auto began = Clock::now();
    const DeltaChange arrival = sw.ingest(t, sink);
    sink(arrival);
    score(t, false, began);
  }

  const std::size_t k = std::min(options.count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(k), scored.end(),
                    [](const Detection& a, const Detection& b) { return a.z_score > b.z_score; });
  scored.resize(k);
  record.detections = std::move(scored);

  std::size_t hits = 0;
  double lat_units = 0.0, lat_seconds = 0.0;
  bool timed = true;
  for (const auto& d : record.detections) {
    if (!d.injected) continue;
    ++hits;
    for (const auto& inj : record.injected) {
      if (inj.event_index == d.event_index) lat_units += static_cast<double>(d.time - inj.time);
    }
    if (d.latency_seconds) lat_seconds += *d.latency_seconds;
    else timed = false;
  }
  if (options.count > 0) record.precision_at_k = static_cast<double>(hits) / static_cast<double>(options.count);
  if (hits > 0) {
    record.mean_latency_time_units = lat_units / static_cast<double>(hits);
    if (timed) record.mean_latency_seconds = lat_seconds / static_cast<double>(hits);
  }
  return record;
}

}  // namespace sns
