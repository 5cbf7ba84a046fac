// Command-line front end: runs, sweeps, anomaly task, synthetic streams.
//
// Exit codes: 0 success, 1 usage/config/parse error, 2 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "sns/error.hpp"
#include "sns/harness.hpp"
#include "sns/report.hpp"
#include "sns/stream_io.hpp"

namespace {

struct Common {
  std::string config;
  std::string events;
  std::string out;
  std::string format = "both";
  std::string algorithm;
  std::int64_t seed = -1;
  bool quiet = false;
  bool no_timing = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_events) {
  cmd->add_option("--config", c.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* ev = cmd->add_option("--events", c.events, "event CSV")->check(CLI::ExistingFile);
  if (needs_events) ev->required();
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--algorithm", c.algorithm, "override: mat, vec, rnd, vec_plus, rnd_plus");
  cmd->add_flag("--quiet", c.quiet, "no progress output");
  cmd->add_flag("--no-timing", c.no_timing, "omit wall-clock fields so reports are reproducible");
}

sns::RunConfig resolve(const Common& c) {
  sns::RunConfig config = sns::load_config(c.config);
  if (c.seed >= 0) config.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.algorithm.empty()) {
    auto a = sns::parse_algorithm(c.algorithm);
    if (!a) throw sns::Error(sns::ErrorCode::kRangeError, "unknown algorithm '" + c.algorithm + "'");
    config.algorithm = *a;
  }
  return config;
}

std::vector<sns::TimestampedTuple> load_events(const Common& c, const sns::RunConfig& config) {
  return sns::parse_events(c.events, config.mode_lengths);
}

sns::ReportFormat parse_format(const std::string& f) {
  if (f == "csv") return sns::ReportFormat::kCsv;
  if (f == "json") return sns::ReportFormat::kJson;
  if (f == "both") return sns::ReportFormat::kBoth;
  throw sns::Error(sns::ErrorCode::kRangeError, "format must be csv, json or both");
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
  if (!out) throw sns::Error(sns::ErrorCode::kIoError, "cannot write " + dir + "/" + name);
  return out;
}

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::vector<sns::Index> parse_list(const std::string& text) {
  std::vector<sns::Index> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(static_cast<sns::Index>(std::stoul(part)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("SNS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }

  CLI::App app{"Streaming CP decomposition of sparse tensor windows"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "replay a stream and report fitness and latency");
  add_common(run, run_opts, true);
  run->add_option("--format", run_opts.format, "csv, json or both");

  Common theta_opts;
  std::string thetas;
  auto* sweep_theta = app.add_subcommand("sweep-theta", "fitness and latency against theta");
  add_common(sweep_theta, theta_opts, true);
  sweep_theta->add_option("--thetas", thetas, "comma separated; default 25,50,100,200% of theta");

  Common scale_opts;
  std::string sizes = "1000,3000,10000,30000";
  std::string scale_modes = "200,200";
  auto* sweep_scale = app.add_subcommand("sweep-scale", "total runtime against stream length");
  add_common(sweep_scale, scale_opts, false);
  sweep_scale->add_option("--sizes", sizes, "tuple counts of the synthetic streams");
  sweep_scale->add_option("--modes", scale_modes, "non-time mode lengths of the synthetic streams");

  Common anomaly_opts;
  std::size_t anomaly_count = 20;
  double anomaly_factor = 5.0;
  auto* anomaly = app.add_subcommand("anomaly", "inject large changes and rank residual z-scores");
  add_common(anomaly, anomaly_opts, true);
  anomaly->add_option("--count", anomaly_count, "number of injections (k)");
  anomaly->add_option("--factor", anomaly_factor, "injection size relative to the largest warm-up change");

  sns::SynthParams synth_params;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  std::string synth_modes = "40,40";
  std::string synth_active;
  bool synth_real = false;
  auto* synth = app.add_subcommand("synth", "write a seeded synthetic event CSV");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path")->required();
  synth->add_option("--count", synth_params.num_tuples, "number of tuples");
  synth->add_option("--modes", synth_modes, "comma separated non-time mode lengths");
  synth->add_option("--mean-gap", synth_params.mean_gap, "mean gap between tuples");
  synth->add_flag("--power-law", synth_params.power_law, "skewed index distribution");
  synth->add_option("--exponent", synth_params.power_exponent, "power-law exponent");
  synth->add_option("--value-max", synth_params.value_max, "largest value");
  synth->add_flag("--real-values", synth_real, "real instead of integer values");
  synth->add_option("--planted-rank", synth_params.planted_rank, "periodic emitters with CP structure");
  synth->add_option("--active", synth_active, "active indices per mode in planted mode");
  synth->add_option("--period", synth_params.period, "emission period in planted mode");
  synth->add_option("--noise", synth_params.noise, "relative noise in planted mode");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "check a config and print it with defaults");
  validate->add_option("--config", validate_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      const auto config = resolve(run_opts);
      const auto stream = load_events(run_opts, config);
      sns::RunOptions opts;
      opts.include_timing = !run_opts.no_timing;
      if (!run_opts.quiet) {
        opts.progress = [](const sns::SeriesPoint& p) {
          std::cerr << "clock " << p.clock << " fitness " << p.fitness;
          if (p.relative_fitness) std::cerr << " relative " << *p.relative_fitness;
          std::cerr << "\n";
        };
      }
      const auto report = sns::run_experiment(stream, config, opts);
      sns::emit_report(report, run_opts.out, parse_format(run_opts.format));
    } else if (*sweep_theta) {
      const auto config = resolve(theta_opts);
      if (config.algorithm != sns::Algorithm::kRnd && config.algorithm != sns::Algorithm::kRndPlus) {
        throw sns::Error(sns::ErrorCode::kRangeError, "theta sweeps need algorithm rnd or rnd_plus");
      }
      std::vector<sns::Index> values;
      if (thetas.empty()) {
        for (double f : {0.25, 0.5, 1.0, 2.0}) {
          values.push_back(std::max<sns::Index>(1, static_cast<sns::Index>(f * config.theta)));
        }
      } else {
        values = parse_list(thetas);
      }
      const auto stream = load_events(theta_opts, config);
      const auto rows = sns::theta_sweep(stream, config, values);
      auto out = open_out(theta_opts.out, "theta.csv");
      out << "theta,avg_relative_fitness,latency_mean_ns\n";
      for (const auto& r : rows) {
        out << r.theta << ',' << (r.avg_relative_fitness ? number(*r.avg_relative_fitness) : "") << ','
            << (theta_opts.no_timing ? "" : number(r.latency_mean_ns)) << '\n';
        if (!theta_opts.quiet) std::cerr << "theta " << r.theta << " done\n";
      }
    } else if (*sweep_scale) {
      const auto config = resolve(scale_opts);
      std::vector<std::vector<sns::TimestampedTuple>> streams;
      if (!scale_opts.events.empty()) {
        // Prefixes of the given file.
        const auto full = load_events(scale_opts, config);
        for (auto n : parse_list(sizes)) {
          streams.emplace_back(full.begin(), full.begin() + std::min<std::size_t>(n, full.size()));
        }
      } else {
        sns::SynthParams p;
        p.mode_lengths = parse_list(scale_modes);
        for (auto n : parse_list(sizes)) {
          p.num_tuples = n;
          streams.push_back(sns::synth_stream(p, config.seed));
        }
      }
      const auto result = sns::scalability_sweep(streams, config);
      auto out = open_out(scale_opts.out, "scale.csv");
      out << "tuples,events,runtime_seconds\n";
      for (const auto& p : result.points) {
        out << p.tuples << ',' << p.events << ',' << number(p.runtime_seconds) << '\n';
      }
      if (!scale_opts.quiet) {
        std::cerr << "log-log slope: " << (result.slope ? number(*result.slope) : "undefined") << "\n";
      }
    } else if (*anomaly) {
      const auto config = resolve(anomaly_opts);
      const auto stream = load_events(anomaly_opts, config);
      sns::AnomalyOptions opts;
      opts.count = anomaly_count;
      opts.magnitude_factor = anomaly_factor;
      opts.seed = config.seed;
      opts.include_timing = !anomaly_opts.no_timing;
      const auto record = sns::inject_and_detect(stream, config, opts);
      auto out = open_out(anomaly_opts.out, "anomaly.json");
      out << sns::anomaly_json(record).dump(2) << '\n';
      if (!anomaly_opts.quiet) std::cerr << "precision@" << anomaly_count << " " << record.precision_at_k << "\n";
    } else if (*synth) {
      synth_params.mode_lengths = parse_list(synth_modes);
      synth_params.integer_values = !synth_real;
      if (!synth_active.empty()) synth_params.active_per_mode = parse_list(synth_active);
      const auto tuples = sns::synth_stream(synth_params, synth_seed);
      const auto parent = std::filesystem::path(synth_out).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      std::ofstream out(synth_out, std::ios::binary);
      if (!out) throw sns::Error(sns::ErrorCode::kIoError, "cannot write " + synth_out);
      sns::write_events(out, tuples, synth_params.mode_lengths.size());
    } else if (*validate) {
      const auto config = sns::load_config(validate_path);
      std::cout << sns::to_json(config).dump(2) << "\n";
    }
  } catch (const sns::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == sns::ErrorCode::kNonFinite ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
