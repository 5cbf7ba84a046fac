#pragma once

// Continuously sliding tensor window over a timestamped event stream.
//
// Each tuple (i_1..i_{M-1}, v, t) produces W+1 events: an arrival at t that
// adds v to time index W-1 (0-based, newest), a shift at t + w*T for
// w = 1..W-1 that moves v from time index W-w to W-w-1, and an expiry at
// t + W*T that removes v from time index 0. Every event is reported as a
// DeltaChange after it has been applied to the window.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <queue>
#include <span>
#include <unordered_map>
#include <vector>

namespace sns {

using Index = std::uint32_t;
using Timestamp = std::int64_t;

inline constexpr std::size_t kMaxOrder = 8;

// Fixed-capacity multi-index. All indices are 0-based.
struct Coordinate {
  std::array<Index, kMaxOrder> idx{};
  std::uint8_t order = 0;

  Coordinate() = default;
  Coordinate(std::initializer_list<Index> values);
  static Coordinate from_span(std::span<const Index> values);

  std::size_t size() const noexcept { return order; }
  Index operator[](std::size_t m) const noexcept { return idx[m]; }
  Index& operator[](std::size_t m) noexcept { return idx[m]; }

  // Non-time prefix (drops the last mode).
  Coordinate without_last() const;
  // Appends one more index (used to add the time index).
  Coordinate with_appended(Index last) const;

  friend bool operator==(const Coordinate& a, const Coordinate& b) noexcept;
  friend bool operator<(const Coordinate& a, const Coordinate& b) noexcept;
};

struct CoordinateHash {
  std::size_t operator()(const Coordinate& c) const noexcept;
};

struct TimestampedTuple {
  Coordinate indices;  // M-1 non-time indices
  double value = 0.0;
  Timestamp time = 0;
};

enum class EventKind { kArrival, kShift, kExpiry };

struct EntryChange {
  Coordinate coord;  // full M-mode coordinate, last index is time
  double delta = 0.0;
};

struct DeltaChange {
  EventKind kind = EventKind::kArrival;
  // Number of periods elapsed since the tuple arrived: 0 for arrivals,
  // 1..W-1 for shifts, W for expiries.
  Index step = 0;
  std::array<EntryChange, 2> changes{};
  std::uint8_t count = 0;
  TimestampedTuple tuple;

  std::span<const EntryChange> entries() const { return {changes.data(), count}; }
};

// Sparse M-mode tensor with per-(mode, index) registries of its non-zeros.
class SparseWindow {
 public:
  struct Entry {
    Coordinate coord;
    double value = 0.0;
  };

  SparseWindow() = default;
  explicit SparseWindow(std::vector<Index> dims);

  const std::vector<Index>& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t nnz() const noexcept { return entries_.size(); }

  // Adds `delta` to the entry. `live_delta` tracks how many contributions the
  // entry holds; an entry whose contributions all left, or whose value lands
  // exactly on zero, is removed.
  void add(const Coordinate& c, double delta, int live_delta = 0);

  double value(const Coordinate& c) const;
  bool contains(const Coordinate& c) const;

  std::span<const Entry> entries() const noexcept { return entries_; }
  const Entry& entry(std::uint32_t slot) const noexcept { return entries_[slot]; }

  // Slots of the non-zeros whose m-th index equals i.
  std::span<const std::uint32_t> registry(std::size_t mode, Index i) const;
  std::size_t degree(std::size_t mode, Index i) const;

  void check_coordinate(const Coordinate& c) const;

  // Throws ErrorCode::kAuditFailure if registries and entries disagree.
  void audit() const;

 private:
  void insert(const Coordinate& c, double value, int live);
  void erase(std::uint32_t slot);

  std::vector<Index> dims_;
  std::vector<Entry> entries_;
  std::vector<int> live_;
  std::vector<std::array<std::uint32_t, kMaxOrder>> reg_pos_;
  std::unordered_map<Coordinate, std::uint32_t, CoordinateHash> lookup_;
  std::vector<std::vector<std::vector<std::uint32_t>>> registry_;
  // Contribution counts of entries removed because their value hit exactly 0.
  std::unordered_map<Coordinate, int, CoordinateHash> ghost_live_;
};

// Number of non-zeros of X + delta whose m-th index is i, where `pending` has
// NOT yet been applied to `window`.
std::size_t degree_with_pending(const SparseWindow& window, const DeltaChange& pending,
                                std::size_t mode, Index i);

// Event-driven maintenance of the window D(t, W).
class StreamWindow {
 public:
  using EventSink = std::function<void(const DeltaChange&)>;

  StreamWindow(std::vector<Index> mode_lengths, Timestamp period, Index window_size);

  // Drains every scheduled update due at or before tuple.time (reporting each
  // through `on_event`), then applies the arrival and returns it.
  DeltaChange ingest(const TimestampedTuple& tuple, const EventSink& on_event = {});

  // Applies all scheduled updates due at or before `to`; returns their count.
  std::size_t advance_clock(Timestamp to, const EventSink& on_event = {});

  const SparseWindow& window() const noexcept { return window_; }
  Timestamp clock() const noexcept { return clock_; }
  Timestamp period() const noexcept { return period_; }
  Index window_size() const noexcept { return window_size_; }
  const std::vector<Index>& mode_lengths() const noexcept { return mode_lengths_; }
  std::size_t pending_updates() const noexcept { return queue_.size(); }
  std::optional<Timestamp> next_due() const;

  void audit() const { window_.audit(); }

 private:
  struct Scheduled {
    Timestamp due;
    std::uint64_t seq;
    Index step;
    TimestampedTuple tuple;
  };
  struct Later {
    bool operator()(const Scheduled& a, const Scheduled& b) const noexcept {
      return a.due != b.due ? a.due > b.due : a.seq > b.seq;
    }
  };

  void schedule(const TimestampedTuple& tuple, Index step);
  DeltaChange apply_update(const Scheduled& s);

  std::vector<Index> mode_lengths_;
  Timestamp period_;
  Index window_size_;
  SparseWindow window_;
  Timestamp clock_ = 0;
  bool started_ = false;
  std::uint64_t seq_ = 0;
  std::priority_queue<Scheduled, std::vector<Scheduled>, Later> queue_;
};

}  // namespace sns
