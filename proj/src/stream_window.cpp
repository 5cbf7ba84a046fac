#include "sns/stream_window.hpp"

#include <algorithm>
#include <string>

#include "sns/error.hpp"

namespace sns {

Coordinate::Coordinate(std::initializer_list<Index> values) {
  if (values.size() > kMaxOrder) {
    throw Error(ErrorCode::kShapeMismatch, "coordinate order exceeds " + std::to_string(kMaxOrder));
  }
  order = static_cast<std::uint8_t>(values.size());
  std::copy(values.begin(), values.end(), idx.begin());
}

Coordinate Coordinate::from_span(std::span<const Index> values) {
  if (values.size() > kMaxOrder) {
    throw Error(ErrorCode::kShapeMismatch, "coordinate order exceeds " + std::to_string(kMaxOrder));
  }
  Coordinate c;
  c.order = static_cast<std::uint8_t>(values.size());
  std::copy(values.begin(), values.end(), c.idx.begin());
  return c;
}

Coordinate Coordinate::without_last() const {
  Coordinate c = *this;
  if (c.order > 0) {
    --c.order;
    c.idx[c.order] = 0;
  }
  return c;
}

Coordinate Coordinate::with_appended(Index last) const {
  if (order >= kMaxOrder) {
    throw Error(ErrorCode::kShapeMismatch, "coordinate order exceeds " + std::to_string(kMaxOrder));
  }
  Coordinate c = *this;
  c.idx[c.order++] = last;
  return c;
}

bool operator==(const Coordinate& a, const Coordinate& b) noexcept {
  if (a.order != b.order) return false;
  for (std::size_t m = 0; m < a.order; ++m) {
    if (a.idx[m] != b.idx[m]) return false;
  }
  return true;
}

bool operator<(const Coordinate& a, const Coordinate& b) noexcept {
  if (a.order != b.order) return a.order < b.order;
  for (std::size_t m = 0; m < a.order; ++m) {
    if (a.idx[m] != b.idx[m]) return a.idx[m] < b.idx[m];
  }
  return false;
}

std::size_t CoordinateHash::operator()(const Coordinate& c) const noexcept {
  // splitmix64 over the used indices
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ c.order;
  for (std::size_t m = 0; m < c.order; ++m) {
    h ^= c.idx[m] + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
  }
  return static_cast<std::size_t>(h);
}

// ---------------------------------------------------------------------------
// SparseWindow

SparseWindow::SparseWindow(std::vector<Index> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > kMaxOrder) {
    throw Error(ErrorCode::kShapeMismatch, "window order must be in [1, " +
                                               std::to_string(kMaxOrder) + "]");
  }
  registry_.resize(dims_.size());
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    if (dims_[m] == 0) throw Error(ErrorCode::kShapeMismatch, "mode length must be positive");
    registry_[m].resize(dims_[m]);
  }
}

void SparseWindow::check_coordinate(const Coordinate& c) const {
  if (c.size() != dims_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "coordinate has " + std::to_string(c.size()) + " modes, window has " +
                    std::to_string(dims_.size()));
  }
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    if (c[m] >= dims_[m]) {
      throw Error(ErrorCode::kIndexOutOfRange, "index " + std::to_string(c[m]) + " of mode " +
                                                   std::to_string(m) + " exceeds length " +
                                                   std::to_string(dims_[m]));
    }
  }
}

void SparseWindow::add(const Coordinate& c, double delta, int live_delta) {
  check_coordinate(c);
  auto it = lookup_.find(c);
  if (it != lookup_.end()) {
    const std::uint32_t slot = it->second;
    entries_[slot].value += delta;
    live_[slot] += live_delta;
    const bool drained = live_delta != 0 && live_[slot] == 0;
    if (drained || entries_[slot].value == 0.0) {
      if (!drained && live_[slot] != 0) ghost_live_[c] = live_[slot];
      erase(slot);
    }
    return;
  }

  int live = live_delta;
  if (!ghost_live_.empty()) {
    if (auto g = ghost_live_.find(c); g != ghost_live_.end()) {
      live += g->second;
      ghost_live_.erase(g);
    }
  }
  const bool drained = live_delta != 0 && live == 0;
  if (delta != 0.0 && !drained) {
    insert(c, delta, live);
  } else if (live != 0) {
    ghost_live_[c] = live;
  }
}

void SparseWindow::insert(const Coordinate& c, double value, int live) {
  const auto slot = static_cast<std::uint32_t>(entries_.size());
  entries_.push_back({c, value});
  live_.push_back(live);
  reg_pos_.emplace_back();
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    auto& reg = registry_[m][c[m]];
    reg_pos_[slot][m] = static_cast<std::uint32_t>(reg.size());
    reg.push_back(slot);
  }
  lookup_.emplace(c, slot);
}

void SparseWindow::erase(std::uint32_t slot) {
  const Coordinate c = entries_[slot].coord;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    auto& reg = registry_[m][c[m]];
    const std::uint32_t pos = reg_pos_[slot][m];
    const std::uint32_t moved = reg.back();
    reg[pos] = moved;
    reg_pos_[moved][m] = pos;
    reg.pop_back();
  }
  lookup_.erase(c);

  const auto last = static_cast<std::uint32_t>(entries_.size() - 1);
  if (slot != last) {
    entries_[slot] = entries_[last];
    live_[slot] = live_[last];
    reg_pos_[slot] = reg_pos_[last];
    const Coordinate& moved = entries_[slot].coord;
    lookup_[moved] = slot;
    for (std::size_t m = 0; m < dims_.size(); ++m) {
      registry_[m][moved[m]][reg_pos_[slot][m]] = slot;
    }
  }
  entries_.pop_back();
  live_.pop_back();
  reg_pos_.pop_back();
}

double SparseWindow::value(const Coordinate& c) const {
  auto it = lookup_.find(c);
  return it == lookup_.end() ? 0.0 : entries_[it->second].value;
}

bool SparseWindow::contains(const Coordinate& c) const { return lookup_.count(c) != 0; }

std::span<const std::uint32_t> SparseWindow::registry(std::size_t mode, Index i) const {
  if (mode >= dims_.size() || i >= dims_[mode]) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "registry (" + std::to_string(mode) + ", " + std::to_string(i) + ") out of range");
  }
  return registry_[mode][i];
}

std::size_t SparseWindow::degree(std::size_t mode, Index i) const {
  return registry(mode, i).size();
}

void SparseWindow::audit() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kAuditFailure, why); };
  if (lookup_.size() != entries_.size()) fail("lookup size differs from entry count");
  for (std::uint32_t slot = 0; slot < entries_.size(); ++slot) {
    const auto& e = entries_[slot];
    if (e.value == 0.0) fail("explicit zero stored");
    auto it = lookup_.find(e.coord);
    if (it == lookup_.end() || it->second != slot) fail("lookup does not map back to slot");
    for (std::size_t m = 0; m < dims_.size(); ++m) {
      const auto& reg = registry_[m][e.coord[m]];
      const auto pos = reg_pos_[slot][m];
      if (pos >= reg.size() || reg[pos] != slot) fail("registry position is stale");
    }
  }
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    std::size_t total = 0;
    for (Index i = 0; i < dims_[m]; ++i) {
      for (std::uint32_t slot : registry_[m][i]) {
        if (slot >= entries_.size() || entries_[slot].coord[m] != i) fail("registry holds stale slot");
      }
      total += registry_[m][i].size();
    }
    if (total != entries_.size()) fail("registry sizes do not sum to nnz");
  }
}

std::size_t degree_with_pending(const SparseWindow& window, const DeltaChange& pending,
                                std::size_t mode, Index i) {
  std::size_t deg = window.degree(mode, i);
  for (const auto& ch : pending.entries()) {
    if (ch.coord[mode] != i) continue;
    const double before = window.value(ch.coord);
    const double after = before + ch.delta;
    if (before == 0.0 && after != 0.0) ++deg;
    if (before != 0.0 && after == 0.0) --deg;
  }
  return deg;
}

// ---------------------------------------------------------------------------
// StreamWindow

static std::vector<Index> window_dims(std::vector<Index> mode_lengths, Index window_size) {
  mode_lengths.push_back(window_size);
  return mode_lengths;
}

StreamWindow::StreamWindow(std::vector<Index> mode_lengths, Timestamp period, Index window_size)
    : mode_lengths_(std::move(mode_lengths)),
      period_(period),
      window_size_(window_size),
      window_(window_dims(mode_lengths_, window_size)) {
  if (period_ < 1) throw Error(ErrorCode::kRangeError, "period T must be >= 1");
  if (window_size_ < 1) throw Error(ErrorCode::kRangeError, "window size W must be >= 1");
}

std::optional<Timestamp> StreamWindow::next_due() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().due;
}

void StreamWindow::schedule(const TimestampedTuple& tuple, Index step) {
  queue_.push(Scheduled{tuple.time + static_cast<Timestamp>(step) * period_, seq_++, step, tuple});
}

DeltaChange StreamWindow::ingest(const TimestampedTuple& tuple, const EventSink& on_event) {
  if (tuple.indices.size() != mode_lengths_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "tuple has " + std::to_string(tuple.indices.size()) +
                                                 " indices, expected " +
                                                 std::to_string(mode_lengths_.size()));
  }
  for (std::size_t m = 0; m < mode_lengths_.size(); ++m) {
    if (tuple.indices[m] >= mode_lengths_[m]) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "index " + std::to_string(tuple.indices[m]) + " of mode " + std::to_string(m) +
                      " exceeds length " + std::to_string(mode_lengths_[m]));
    }
  }
  if (started_ && tuple.time < clock_) {
    throw Error(ErrorCode::kTimeRegression, "timestamp " + std::to_string(tuple.time) +
                                                " precedes clock " + std::to_string(clock_));
  }
  advance_clock(tuple.time, on_event);

  DeltaChange d;
  d.kind = EventKind::kArrival;
  d.step = 0;
  d.tuple = tuple;
  d.changes[0] = {tuple.indices.with_appended(window_size_ - 1), tuple.value};
  d.count = 1;
  window_.add(d.changes[0].coord, tuple.value, +1);
  schedule(tuple, 1);
  return d;
}

std::size_t StreamWindow::advance_clock(Timestamp to, const EventSink& on_event) {
  if (started_ && to < clock_) {
    throw Error(ErrorCode::kTimeRegression,
                "cannot move clock back from " + std::to_string(clock_) + " to " + std::to_string(to));
  }
  std::size_t processed = 0;
  while (!queue_.empty() && queue_.top().due <= to) {
    Scheduled s = queue_.top();
    queue_.pop();
    clock_ = s.due;
    const DeltaChange d = apply_update(s);
    ++processed;
    if (on_event) on_event(d);
  }
  clock_ = to;
  started_ = true;
  return processed;
}

DeltaChange StreamWindow::apply_update(const Scheduled& s) {
  DeltaChange d;
  d.step = s.step;
  d.tuple = s.tuple;
  const Index from = window_size_ - s.step;
  d.changes[0] = {s.tuple.indices.with_appended(from), -s.tuple.value};
  window_.add(d.changes[0].coord, -s.tuple.value, -1);
  if (s.step < window_size_) {
    d.kind = EventKind::kShift;
    d.changes[1] = {s.tuple.indices.with_appended(from - 1), s.tuple.value};
    d.count = 2;
    window_.add(d.changes[1].coord, s.tuple.value, +1);
    schedule(s.tuple, s.step + 1);
  } else {
    d.kind = EventKind::kExpiry;
    d.count = 1;
  }
  return d;
}

}  // namespace sns
