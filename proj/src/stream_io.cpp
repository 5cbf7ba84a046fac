#include "sns/stream_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string_view>

#include "sns/error.hpp"

namespace sns {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

EventReader::EventReader(std::istream& in, std::vector<Index> mode_lengths)
    : in_(in), mode_lengths_(std::move(mode_lengths)) {}

std::optional<TimestampedTuple> EventReader::next() {
  std::string raw;
  while (std::getline(in_, raw)) {
    ++line_;
    const std::string_view text = trim(raw);
    if (text.empty()) continue;
    auto fields = split(text);
    if (header_.empty()) {
      if (fields.size() < 3) {
        throw Error(ErrorCode::kParseError, "header needs timestamp, at least one index and a value", line_);
      }
      for (auto f : fields) header_.emplace_back(f);
      index_columns_ = fields.size() - 2;
      if (index_columns_ + 1 > kMaxOrder) {
        throw Error(ErrorCode::kParseError, "too many index columns", line_);
      }
      if (!mode_lengths_.empty() && mode_lengths_.size() != index_columns_) {
        throw Error(ErrorCode::kParseError,
                    "header has " + std::to_string(index_columns_) + " index columns, expected " +
                        std::to_string(mode_lengths_.size()),
                    line_);
      }
      continue;
    }
    if (fields.size() != index_columns_ + 2) {
      throw Error(ErrorCode::kParseError,
                  "expected " + std::to_string(index_columns_ + 2) + " fields, got " +
                      std::to_string(fields.size()),
                  line_);
    }
    TimestampedTuple t;
    if (!parse_number(fields[0], t.time)) {
      throw Error(ErrorCode::kParseError, "bad timestamp '" + std::string(fields[0]) + "'", line_);
    }
    if (last_time_ && t.time < *last_time_) {
      throw Error(ErrorCode::kNonMonotoneTimestamp,
                  "timestamp " + std::to_string(t.time) + " precedes " + std::to_string(*last_time_),
                  line_);
    }
    t.indices.order = static_cast<std::uint8_t>(index_columns_);
    for (std::size_t m = 0; m < index_columns_; ++m) {
      std::uint64_t one_based = 0;
      if (!parse_number(fields[m + 1], one_based)) {
        throw Error(ErrorCode::kParseError, "bad index '" + std::string(fields[m + 1]) + "'", line_);
      }
      const bool too_big = !mode_lengths_.empty() ? one_based > mode_lengths_[m]
                                                  : one_based > std::numeric_limits<Index>::max();
      if (one_based == 0 || too_big) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "index " + std::to_string(one_based) + " out of range in column " +
                        std::to_string(m + 2),
                    line_);
      }
      t.indices[m] = static_cast<Index>(one_based - 1);
    }
    if (!parse_number(fields.back(), t.value) || !std::isfinite(t.value)) {
      throw Error(ErrorCode::kParseError, "bad value '" + std::string(fields.back()) + "'", line_);
    }
    last_time_ = t.time;
    return t;
  }
  return std::nullopt;
}

std::vector<TimestampedTuple> parse_events(std::istream& in, const std::vector<Index>& mode_lengths) {
  EventReader reader(in, mode_lengths);
  std::vector<TimestampedTuple> out;
  while (auto t = reader.next()) out.push_back(*t);
  return out;
}

std::vector<TimestampedTuple> parse_events(const std::string& path,
                                           const std::vector<Index>& mode_lengths) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open event file " + path);
  return parse_events(in, mode_lengths);
}

void write_events(std::ostream& out, const std::vector<TimestampedTuple>& tuples,
                  std::size_t index_columns) {
  out << "timestamp";
  for (std::size_t m = 0; m < index_columns; ++m) out << ",i" << m + 1;
  out << ",value\n";
  for (const auto& t : tuples) {
    if (t.indices.size() != index_columns) {
      throw Error(ErrorCode::kShapeMismatch, "tuple order differs from the column count");
    }
    out << t.time;
    for (std::size_t m = 0; m < index_columns; ++m) out << ',' << t.indices[m] + 1;
    out << ',' << shortest(t.value) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed to write events");
}

std::vector<Index> infer_mode_lengths(const std::vector<TimestampedTuple>& tuples) {
  std::vector<Index> lengths;
  for (const auto& t : tuples) {
    if (lengths.empty()) lengths.assign(t.indices.size(), 0);
    for (std::size_t m = 0; m < lengths.size(); ++m) lengths[m] = std::max(lengths[m], t.indices[m] + 1);
  }
  return lengths;
}

// ---------------------------------------------------------------------------

SynthStream::SynthStream(SynthParams params, std::uint64_t seed)
    : params_(std::move(params)), rng_(seed), clock_(params_.start_time) {
  if (params_.mode_lengths.empty() || params_.mode_lengths.size() + 1 > kMaxOrder) {
    throw Error(ErrorCode::kRangeError, "synthetic stream needs 1..7 non-time modes");
  }
  for (Index n : params_.mode_lengths) {
    if (n == 0) throw Error(ErrorCode::kRangeError, "mode lengths must be positive");
  }
  if (params_.planted_rank <= 0) {
    if (params_.power_law) {
      for (Index n : params_.mode_lengths) {
        std::vector<double> w(n);
        for (Index i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i) + 1.0, -params_.power_exponent);
        skewed_.emplace_back(w.begin(), w.end());
      }
    }
    return;
  }

  if (params_.period < 1) throw Error(ErrorCode::kRangeError, "period must be >= 1");
  const std::size_t modes = params_.mode_lengths.size();
  std::vector<std::vector<Index>> active(modes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t m = 0; m < modes; ++m) {
    std::vector<Index> all(params_.mode_lengths[m]);
    std::iota(all.begin(), all.end(), Index{0});
    std::shuffle(all.begin(), all.end(), rng_);
    Index keep = params_.mode_lengths[m];
    if (m < params_.active_per_mode.size()) keep = std::min(keep, params_.active_per_mode[m]);
    all.resize(std::max<Index>(keep, 1));
    std::sort(all.begin(), all.end());
    active[m] = std::move(all);
  }
  const int rank = params_.planted_rank;
  std::vector<std::vector<double>> factors(modes);
  for (std::size_t m = 0; m < modes; ++m) {
    factors[m].resize(static_cast<std::size_t>(params_.mode_lengths[m]) * rank);
    for (auto& v : factors[m]) v = unit(rng_);
  }

  // Enumerate the product of active subsets.
  std::vector<std::size_t> pos(modes, 0);
  while (true) {
    Coordinate c;
    c.order = static_cast<std::uint8_t>(modes);
    for (std::size_t m = 0; m < modes; ++m) c[m] = active[m][pos[m]];
    double v = 0.0;
    for (int r = 0; r < rank; ++r) {
      double p = 1.0;
      for (std::size_t m = 0; m < modes; ++m) p *= factors[m][static_cast<std::size_t>(c[m]) * rank + r];
      v += p;
    }
    active_.push_back(c);
    base_value_.push_back(v);
    std::size_t m = 0;
    while (m < modes && ++pos[m] == active[m].size()) pos[m++] = 0;
    if (m == modes) break;
  }
  std::uniform_int_distribution<Timestamp> phase(0, params_.period - 1);
  phase_.resize(active_.size());
  for (auto& p : phase_) p = phase(rng_);
  // Emission order inside a period: by phase, ties by coordinate.
  std::vector<std::size_t> order(active_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return phase_[a] < phase_[b]; });
  std::vector<Coordinate> coords;
  std::vector<double> values;
  std::vector<Timestamp> phases;
  for (auto k : order) {
    coords.push_back(active_[k]);
    values.push_back(base_value_[k]);
    phases.push_back(phase_[k]);
  }
  active_ = std::move(coords);
  base_value_ = std::move(values);
  phase_ = std::move(phases);
  period_start_ = params_.start_time;
}

std::optional<TimestampedTuple> SynthStream::next() {
  if (produced_ >= params_.num_tuples) return std::nullopt;
  ++produced_;
  return params_.planted_rank > 0 ? planted() : unstructured();
}

TimestampedTuple SynthStream::unstructured() {
  TimestampedTuple t;
  if (produced_ > 1) {
    std::geometric_distribution<Timestamp> gap(1.0 / (1.0 + params_.mean_gap));
    clock_ += gap(rng_);
  }
  t.time = clock_;
  t.indices.order = static_cast<std::uint8_t>(params_.mode_lengths.size());
  for (std::size_t m = 0; m < params_.mode_lengths.size(); ++m) {
    if (params_.power_law) {
      t.indices[m] = skewed_[m](rng_);
    } else {
      std::uniform_int_distribution<Index> pick(0, params_.mode_lengths[m] - 1);
      t.indices[m] = pick(rng_);
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (params_.integer_values) {
    const auto top = std::max<std::int64_t>(1, static_cast<std::int64_t>(params_.value_max));
    std::uniform_int_distribution<std::int64_t> pick(1, top);
    t.value = static_cast<double>(pick(rng_));
  } else {
    t.value = 1.0 + unit(rng_) * (params_.value_max - 1.0);
  }
  return t;
}

TimestampedTuple SynthStream::planted() {
  if (cursor_ == active_.size()) {
    cursor_ = 0;
    period_start_ += params_.period;
  }
  TimestampedTuple t;
  t.indices = active_[cursor_];
  t.time = period_start_ + phase_[cursor_];
  double eps = 0.0;
  if (params_.noise > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    do eps = normal(rng_);
    while (std::abs(eps) > 3.0);
  }
  t.value = base_value_[cursor_] * (1.0 + params_.noise * eps);
  ++cursor_;
  return t;
}

std::vector<TimestampedTuple> synth_stream(const SynthParams& params, std::uint64_t seed) {
  SynthStream s(params, seed);
  std::vector<TimestampedTuple> out;
  out.reserve(params.num_tuples);
  while (auto t = s.next()) out.push_back(*t);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T integer_key(const nlohmann::json& doc, const char* key, T fallback, T minimum) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::kTypeError, std::string("'") + key + "' must be an integer");
  }
  const auto x = v.get<std::int64_t>();
  if (x < static_cast<std::int64_t>(minimum)) {
    throw Error(ErrorCode::kRangeError,
                std::string("'") + key + "' must be >= " + std::to_string(minimum));
  }
  return static_cast<T>(x);
}

double real_key(const nlohmann::json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number()) throw Error(ErrorCode::kTypeError, std::string("'") + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw Error(ErrorCode::kRangeError, std::string("'") + key + "' must be finite");
  return x;
}

}  // namespace

RunConfig parse_config(const nlohmann::json& doc) {
  static const char* const kKnown[] = {
      "R",          "W",           "T",           "theta",          "eta",
      "algorithm",  "seed",        "init_sweeps", "init_tolerance", "warmup_window_count",
      "run_duration", "report_interval", "oracle_sweeps", "mode_lengths"};
  if (!doc.is_object()) throw Error(ErrorCode::kTypeError, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw Error(ErrorCode::kRangeError, "unknown config key '" + key + "'");
    }
  }
  if (!doc.contains("T")) throw Error(ErrorCode::kMissingRequiredKey, "config needs 'T' (period)");

  RunConfig c;
  c.source = doc;
  c.rank = integer_key<Eigen::Index>(doc, "R", 20, 1);
  c.window = integer_key<Index>(doc, "W", 10, 1);
  c.period = integer_key<Timestamp>(doc, "T", 0, 1);
  c.theta = integer_key<Index>(doc, "theta", 20, 1);
  c.eta = real_key(doc, "eta", 1000.0);
  if (!(c.eta > 0.0)) throw Error(ErrorCode::kRangeError, "'eta' must be > 0");
  if (doc.contains("algorithm")) {
    const auto& v = doc.at("algorithm");
    if (!v.is_string()) throw Error(ErrorCode::kTypeError, "'algorithm' must be a string");
    auto a = parse_algorithm(v.get<std::string>());
    if (!a) throw Error(ErrorCode::kRangeError, "unknown algorithm '" + v.get<std::string>() + "'");
    c.algorithm = *a;
  }
  c.seed = integer_key<std::uint64_t>(doc, "seed", 0, 0);
  c.init_sweeps = integer_key<int>(doc, "init_sweeps", 100, 1);
  c.init_tolerance = real_key(doc, "init_tolerance", 1e-4);
  if (c.init_tolerance < 0.0) throw Error(ErrorCode::kRangeError, "'init_tolerance' must be >= 0");
  c.warmup_window_count = integer_key<Index>(doc, "warmup_window_count", 1, 1);
  c.run_duration = real_key(doc, "run_duration", 5.0);
  if (c.run_duration < 0.0) throw Error(ErrorCode::kRangeError, "'run_duration' must be >= 0");
  c.report_interval = integer_key<Timestamp>(doc, "report_interval", 0, 0);
  c.oracle_sweeps = integer_key<int>(doc, "oracle_sweeps", 100, 0);
  if (doc.contains("mode_lengths")) {
    const auto& v = doc.at("mode_lengths");
    if (!v.is_array()) throw Error(ErrorCode::kTypeError, "'mode_lengths' must be an array");
    for (const auto& n : v) {
      if (!n.is_number_integer()) throw Error(ErrorCode::kTypeError, "'mode_lengths' entries must be integers");
      if (n.get<std::int64_t>() < 1) throw Error(ErrorCode::kRangeError, "'mode_lengths' entries must be >= 1");
      c.mode_lengths.push_back(n.get<Index>());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["R"] = c.rank;
  j["W"] = c.window;
  j["T"] = c.period;
  j["theta"] = c.theta;
  j["eta"] = c.eta;
  j["algorithm"] = std::string(to_string(c.algorithm));
  j["seed"] = c.seed;
  j["init_sweeps"] = c.init_sweeps;
  j["init_tolerance"] = c.init_tolerance;
  j["warmup_window_count"] = c.warmup_window_count;
  j["run_duration"] = c.run_duration;
  j["report_interval"] = c.report_interval;
  j["oracle_sweeps"] = c.oracle_sweeps;
  if (!c.mode_lengths.empty()) j["mode_lengths"] = c.mode_lengths;
  return j;
}

Index suggest_theta(const SparseWindow& window) {
  std::size_t rows = 0;
  std::size_t incidences = 0;
  for (std::size_t m = 0; m + 1 < window.order(); ++m) {
    for (Index i = 0; i < window.dims()[m]; ++i) {
      const auto d = window.degree(m, i);
      if (d == 0) continue;
      ++rows;
      incidences += d;
    }
  }
  if (rows == 0) return 1;
  const double half = 0.5 * static_cast<double>(incidences) / static_cast<double>(rows);
  return std::max<Index>(1, static_cast<Index>(half));
}

}  // namespace sns
