#pragma once

// Drives an Updater over a stream outside the harness so tests can inspect
// the state between events.

#include <functional>
#include <vector>

#include "sns/cpd_state.hpp"
#include "sns/stream_io.hpp"
#include "sns/updates.hpp"

namespace replay {

struct Run {
  sns::StreamWindow stream;
  sns::CpdState state;
  sns::Updater updater;
  std::size_t next = 0;  // first tuple not yet ingested
};

// Ingests tuples before `warmup_end` without updates, then fits ALS.
inline Run start(const std::vector<sns::TimestampedTuple>& tuples, const std::vector<sns::Index>& dims,
                 sns::Timestamp period, sns::Index window, Eigen::Index rank, sns::UpdateConfig config,
                 sns::Timestamp warmup_end, int als_sweeps = 30) {
  Run r{sns::StreamWindow(dims, period, window), {}, sns::Updater(config)};
  while (r.next < tuples.size() && tuples[r.next].time < warmup_end) r.stream.ingest(tuples[r.next++]);
  r.stream.advance_clock(warmup_end - 1);
  r.state = sns::als_fit(r.stream.window(), rank, 1, {als_sweeps, 1e-4}).state;
  if (config.algorithm == sns::Algorithm::kMat) sns::normalize_into_weights(r.state);
  else sns::balance_columns(r.state);
  return r;
}

// Feeds the remaining tuples (up to `limit` events in total) through the
// updater. `after` runs after every event with the event's change and the
// factors as they were before it.
inline std::size_t feed(Run& r, const std::vector<sns::TimestampedTuple>& tuples, std::size_t limit,
                        const std::function<void(const sns::DeltaChange&, const sns::FactorSet&)>& after = {}) {
  std::size_t events = 0;
  auto sink = [&](const sns::DeltaChange& d) {
    if (events >= limit) return;
    if (after) {
      const sns::FactorSet before = r.state.factors;
      r.updater.dispatch_event(d, r.stream.window(), r.state);
      after(d, before);
    } else {
      r.updater.dispatch_event(d, r.stream.window(), r.state);
    }
    ++events;
  };
  while (r.next < tuples.size() && events < limit) {
    const sns::DeltaChange a = r.stream.ingest(tuples[r.next++], sink);
    sink(a);
  }
  return events;
}

}  // namespace replay
