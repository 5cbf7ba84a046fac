#pragma once

// Per-event factor updates.
//
// All five algorithms consume a DeltaChange that has already been applied to
// the window, so the window passed in is X + dX. `mat` re-solves every factor
// matrix; the other four touch only the rows named by the event (the changed
// time rows first, then row i_m of every non-time mode, ascending) and keep
// A^T A and A_prev^T A up to date incrementally.
//
//   vec       row-wise least squares; time rows use the approximate rule
//             A(t,:) += dX_(M)(t,:) K H^+
//   rnd       like vec, but a non-time row whose degree exceeds theta is fitted
//             against Xhat + Xbar, with Xbar the residual on theta sampled
//             non-zeros of that row
//   vec_plus  coordinate descent per entry with clipping to [-eta, eta]
//   rnd_plus  vec_plus with the same sampling as rnd for high-degree rows

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "sns/cpd_state.hpp"
#include "sns/stream_window.hpp"

namespace sns {

enum class Algorithm { kMat, kVec, kRnd, kVecPlus, kRndPlus };

std::string_view to_string(Algorithm algorithm);
std::optional<Algorithm> parse_algorithm(std::string_view name);

struct UpdateConfig {
  Algorithm algorithm = Algorithm::kRndPlus;
  Index theta = 20;
  double eta = 1000.0;
  std::uint64_t rng_seed = 0;
};

// Residuals xbar_J = x_J - xtilde_J on sampled coordinates of one row.
// xtilde is the reconstruction from the factors as they were at event start.
struct ResidualSample {
  std::vector<Coordinate> coords;
  std::vector<double> residuals;

  std::size_t size() const noexcept { return coords.size(); }
};

struct UpdateStats {
  std::uint64_t events = 0;
  std::uint64_t exact_rows = 0;
  std::uint64_t sampled_rows = 0;
  std::uint64_t clipped_entries = 0;
  std::uint64_t zero_denominator_skips = 0;

  friend bool operator==(const UpdateStats&, const UpdateStats&) = default;
};

class Updater {
 public:
  // Called after every coordinate-descent entry update (mode, row, column).
  using EntryObserver = std::function<void(std::size_t, Index, Eigen::Index)>;

  explicit Updater(UpdateConfig config);

  const UpdateConfig& config() const noexcept { return config_; }
  const UpdateStats& stats() const noexcept { return stats_; }
  void set_entry_observer(EntryObserver observer) { observer_ = std::move(observer); }

  void dispatch_event(const DeltaChange& delta, const SparseWindow& window, CpdState& state);

  // The building blocks below expect begin_event() to have been called for
  // the event being processed. A mode's Gram is rebuilt from its factor
  // here once it has taken as many row updates as it has rows, which keeps
  // rounding from accumulating at amortized O(R^2) cost per row update.
  void begin_event(CpdState& state);

  // One ALS pass over all modes with column normalization into weights.
  void sns_mat_step(const SparseWindow& window, CpdState& state);

  void vec_time_row(const DeltaChange& delta, CpdState& state, Index row);
  void vec_nontime_row(const SparseWindow& window, CpdState& state, std::size_t mode, Index row);
  void rnd_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
               std::size_t mode, Index row);
  void rnd_row_with_sample(const DeltaChange& delta, CpdState& state, std::size_t mode,
                           Index row, const ResidualSample& sample);

  void plus_vec_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                    std::size_t mode, Index row);
  void plus_rnd_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                    std::size_t mode, Index row);
  void plus_row_with_sample(const DeltaChange& delta, CpdState& state, std::size_t mode,
                            Index row, const ResidualSample& sample);

  // Up to theta coordinates drawn uniformly without replacement from the
  // row's registry; coordinates changed by `delta` are dropped.
  ResidualSample draw_sample(const SparseWindow& window, const DeltaChange& delta,
                             const CpdState& state, std::size_t mode, Index row);

  // Entry of the model built from the factors as they were at event start.
  double reconstruct_prev(const CpdState& state, const Coordinate& coord) const;

 private:
  enum class PlusRule { kExact, kTime, kSampled };

  void update_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                  std::size_t mode, Index row);
  void remember_row(const CpdState& state, std::size_t mode, Index row);
  const RowVector* prev_row(std::size_t mode, Index row) const;
  // Writes a whole new row and applies the rank-one Gram corrections.
  void commit_row(CpdState& state, std::size_t mode, Index row, const RowVector& value);
  RowVector delta_projection(const DeltaChange& delta, const CpdState& state, std::size_t mode,
                             Index row);
  void add_delta_projection(const DeltaChange& delta, const CpdState& state, std::size_t mode,
                            Index row, RowVector& out);
  void add_sample_projection(const ResidualSample& sample, const CpdState& state,
                             std::size_t mode, RowVector& out);
  void plus_row(CpdState& state, std::size_t mode, Index row, PlusRule rule,
                const RowVector& target);
  void fill_sample(const SparseWindow& window, const DeltaChange& delta, const CpdState& state,
                   std::size_t mode, Index row, ResidualSample& out);
  void check_row(const CpdState& state, std::size_t mode, Index row) const;

  struct PrevRow {
    std::size_t mode;
    Index row;
    RowVector values;
  };

  UpdateConfig config_;
  UpdateStats stats_;
  std::mt19937_64 rng_;
  // Rows as they were at event start; the first prev_used_ slots are live and
  // the rest keep their storage for reuse.
  std::vector<PrevRow> prev_rows_;
  std::size_t prev_used_ = 0;
  std::vector<Index> row_updates_;  // per mode, since its Gram was last rebuilt
  EntryObserver observer_;

  // Scratch reused across rows to keep the per-event path allocation-free.
  DenseMatrix h_;
  DenseMatrix h_prev_;
  RowVector target_;
  RowVector kr_;
  RowVector old_row_;
  mutable RowVector recon_;
  ResidualSample sample_;
  std::vector<std::pair<std::size_t, std::size_t>> displaced_;
  std::vector<std::uint32_t> picked_;
};

}  // namespace sns
