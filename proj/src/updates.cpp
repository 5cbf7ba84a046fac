#include "sns/updates.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "sns/error.hpp"
#include "sns/kernels.hpp"

namespace sns {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kMat: return "mat";
    case Algorithm::kVec: return "vec";
    case Algorithm::kRnd: return "rnd";
    case Algorithm::kVecPlus: return "vec_plus";
    case Algorithm::kRndPlus: return "rnd_plus";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::kMat, Algorithm::kVec, Algorithm::kRnd, Algorithm::kVecPlus,
                 Algorithm::kRndPlus}) {
    if (to_string(a) == name) return a;
  }
  if (name == "vec+") return Algorithm::kVecPlus;
  if (name == "rnd+") return Algorithm::kRndPlus;
  return std::nullopt;
}

Updater::Updater(UpdateConfig config) : config_(config), rng_(config.rng_seed) {
  if (!(config_.eta > 0.0)) throw Error(ErrorCode::kRangeError, "eta must be positive");
  if (config_.theta < 1) throw Error(ErrorCode::kRangeError, "theta must be >= 1");
}

void Updater::begin_event(CpdState& state) {
  prev_used_ = 0;
  row_updates_.resize(state.order(), 0);
  for (std::size_t m = 0; m < state.order(); ++m) {
    if (row_updates_[m] >= state.factors.modes[m].rows()) {
      state.grams[m] = kernels::gram(state.factors.modes[m]);
      row_updates_[m] = 0;
    }
    state.prev_grams[m] = state.grams[m];
  }
}

void Updater::dispatch_event(const DeltaChange& delta, const SparseWindow& window,
                             CpdState& state) {
  ++stats_.events;
  if (config_.algorithm == Algorithm::kMat) {
    sns_mat_step(window, state);
    return;
  }
  begin_event(state);
  const std::size_t time_mode = state.order() - 1;
  const Index w = delta.step;
  const auto window_size = static_cast<Index>(state.factors.modes[time_mode].rows());
  if (w > 0) update_row(window, delta, state, time_mode, window_size - w);
  if (w < window_size) update_row(window, delta, state, time_mode, window_size - w - 1);
  for (std::size_t m = 0; m < time_mode; ++m) {
    update_row(window, delta, state, m, delta.tuple.indices[m]);
  }
}

void Updater::update_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                         std::size_t mode, Index row) {
  const bool time = mode + 1 == state.order();
  switch (config_.algorithm) {
    case Algorithm::kVec:
      if (time) vec_time_row(delta, state, row);
      else vec_nontime_row(window, state, mode, row);
      break;
    case Algorithm::kRnd:
      if (time) vec_time_row(delta, state, row);
      else rnd_row(window, delta, state, mode, row);
      break;
    case Algorithm::kVecPlus:
      plus_vec_row(window, delta, state, mode, row);
      break;
    case Algorithm::kRndPlus:
      plus_rnd_row(window, delta, state, mode, row);
      break;
    case Algorithm::kMat:
      break;
  }
}

void Updater::sns_mat_step(const SparseWindow& window, CpdState& state) {
  const auto rank = state.rank();
  Vector norms = Vector::Ones(rank);
  for (std::size_t m = 0; m < state.order(); ++m) {
    const DenseMatrix u = kernels::mttkrp(window, nullptr, state.factors, m);
    const DenseMatrix h = kernels::gram_hadamard(state.grams, m);
    DenseMatrix a = u * kernels::pinv_psd(h);
    if (!a.allFinite()) {
      throw Error(ErrorCode::kNonFinite, "factor update produced NaN/Inf in mode " + std::to_string(m));
    }
    for (Eigen::Index r = 0; r < rank; ++r) {
      norms[r] = a.col(r).norm();
      if (norms[r] > 0.0) a.col(r) /= norms[r];
    }
    state.factors.modes[m] = std::move(a);
    state.grams[m] = kernels::gram(state.factors.modes[m]);
  }
  state.weights = norms;
  state.prev_grams = state.grams;
}

void Updater::remember_row(const CpdState& state, std::size_t mode, Index row) {
  if (prev_row(mode, row) != nullptr) return;
  if (prev_used_ == prev_rows_.size()) prev_rows_.emplace_back();
  PrevRow& p = prev_rows_[prev_used_++];
  p.mode = mode;
  p.row = row;
  p.values = state.factors.modes[mode].row(row);
}

const RowVector* Updater::prev_row(std::size_t mode, Index row) const {
  for (std::size_t k = 0; k < prev_used_; ++k) {
    const auto& p = prev_rows_[k];
    if (p.mode == mode && p.row == row) return &p.values;
  }
  return nullptr;
}

void Updater::check_row(const CpdState& state, std::size_t mode, Index row) const {
  if (mode >= state.order() || row >= state.factors.modes[mode].rows()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "row " + std::to_string(row) + " out of range for mode " + std::to_string(mode));
  }
}

void Updater::commit_row(CpdState& state, std::size_t mode, Index row, const RowVector& value) {
  if (!value.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "row " + std::to_string(row) + " of mode " +
                                           std::to_string(mode) + " became NaN/Inf");
  }
  auto a = state.factors.modes[mode].row(row);
  const RowVector* b = prev_row(mode, row);
  DenseMatrix& q = state.grams[mode];
  DenseMatrix& u = state.prev_grams[mode];
  // Q += -a_old^T a_old + a_new^T a_new;  U += b^T (a_new - a_old)
  q.noalias() -= a.transpose() * a;
  q.noalias() += value.transpose() * value;
  u.noalias() += b->transpose() * (value - a);
  a = value;
  ++row_updates_[mode];
}

RowVector Updater::delta_projection(const DeltaChange& delta, const CpdState& state,
                                    std::size_t mode, Index row) {
  RowVector v = RowVector::Zero(state.rank());
  add_delta_projection(delta, state, mode, row, v);
  return v;
}

void Updater::add_delta_projection(const DeltaChange& delta, const CpdState& state,
                                   std::size_t mode, Index row, RowVector& out) {
  kr_.resize(state.rank());
  for (const auto& ch : delta.entries()) {
    if (ch.coord[mode] != row) continue;
    kernels::kr_row(state.factors, mode, ch.coord,
                    std::span<double>(kr_.data(), static_cast<std::size_t>(kr_.size())));
    out += ch.delta * kr_;
  }
}

void Updater::add_sample_projection(const ResidualSample& sample, const CpdState& state,
                                    std::size_t mode, RowVector& out) {
  if (sample.coords.size() != sample.residuals.size()) {
    throw Error(ErrorCode::kShapeMismatch, "sample coordinates and residuals differ in length");
  }
  kr_.resize(state.rank());
  for (std::size_t s = 0; s < sample.size(); ++s) {
    kernels::kr_row(state.factors, mode, sample.coords[s],
                    std::span<double>(kr_.data(), static_cast<std::size_t>(kr_.size())));
    out += sample.residuals[s] * kr_;
  }
}

void Updater::vec_time_row(const DeltaChange& delta, CpdState& state, Index row) {
  const std::size_t mode = state.order() - 1;
  check_row(state, mode, row);
  remember_row(state, mode, row);
  const DenseMatrix h = kernels::gram_hadamard(state.grams, mode);
  const RowVector v = delta_projection(delta, state, mode, row);
  const RowVector next = state.factors.modes[mode].row(row) + v * kernels::pinv_psd(h);
  commit_row(state, mode, row, next);
  ++stats_.exact_rows;
}

void Updater::vec_nontime_row(const SparseWindow& window, CpdState& state, std::size_t mode,
                              Index row) {
  check_row(state, mode, row);
  remember_row(state, mode, row);
  const auto rank = state.rank();
  RowVector v = RowVector::Zero(rank);
  RowVector k(rank);
  for (std::uint32_t slot : window.registry(mode, row)) {
    const auto& e = window.entry(slot);
    kernels::kr_row(state.factors, mode, e.coord, std::span<double>(k.data(), static_cast<std::size_t>(rank)));
    v += e.value * k;
  }
  const DenseMatrix h = kernels::gram_hadamard(state.grams, mode);
  commit_row(state, mode, row, v * kernels::pinv_psd(h));
  ++stats_.exact_rows;
}

void Updater::rnd_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                      std::size_t mode, Index row) {
  check_row(state, mode, row);
  if (window.degree(mode, row) <= config_.theta) {
    vec_nontime_row(window, state, mode, row);
    return;
  }
  fill_sample(window, delta, state, mode, row, sample_);
  rnd_row_with_sample(delta, state, mode, row, sample_);
}

void Updater::rnd_row_with_sample(const DeltaChange& delta, CpdState& state, std::size_t mode,
                                  Index row, const ResidualSample& sample) {
  check_row(state, mode, row);
  remember_row(state, mode, row);
  const RowVector b = *prev_row(mode, row);
  const DenseMatrix h_prev = kernels::gram_hadamard(state.prev_grams, mode);
  const DenseMatrix h = kernels::gram_hadamard(state.grams, mode);
  RowVector target = b * h_prev + delta_projection(delta, state, mode, row);
  add_sample_projection(sample, state, mode, target);
  commit_row(state, mode, row, target * kernels::pinv_psd(h));
  ++stats_.sampled_rows;
}

ResidualSample Updater::draw_sample(const SparseWindow& window, const DeltaChange& delta,
                                    const CpdState& state, std::size_t mode, Index row) {
  ResidualSample sample;
  fill_sample(window, delta, state, mode, row, sample);
  return sample;
}

void Updater::fill_sample(const SparseWindow& window, const DeltaChange& delta,
                          const CpdState& state, std::size_t mode, Index row, ResidualSample& out) {
  const auto reg = window.registry(mode, row);
  const std::size_t deg = reg.size();
  const std::size_t draws = std::min<std::size_t>(config_.theta, deg);
  // Partial Fisher-Yates over registry positions; only displaced positions
  // are stored, and there are at most theta of them.
  displaced_.clear();
  auto at = [&](std::size_t p) {
    for (const auto& [from, to] : displaced_) {
      if (from == p) return to;
    }
    return p;
  };
  // Slots are picked first and their entries prefetched, so the cache misses
  // on a large window overlap instead of queuing one behind another.
  picked_.clear();
  for (std::size_t j = 0; j < draws; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, deg - 1);
    const std::size_t r = pick(rng_);
    const std::size_t chosen = at(r);
    const std::size_t moved = at(j);
    bool found = false;
    for (auto& d : displaced_) {
      if (d.first == r) {
        d.second = moved;
        found = true;
        break;
      }
    }
    if (!found) displaced_.emplace_back(r, moved);
    picked_.push_back(reg[chosen]);
    __builtin_prefetch(&window.entry(reg[chosen]));
  }
  out.coords.clear();
  out.residuals.clear();
  for (const std::uint32_t slot : picked_) {
    const auto& e = window.entry(slot);
    bool changed = false;
    for (const auto& ch : delta.entries()) changed = changed || ch.coord == e.coord;
    if (changed) continue;
    out.coords.push_back(e.coord);
    out.residuals.push_back(e.value - reconstruct_prev(state, e.coord));
  }
}

double Updater::reconstruct_prev(const CpdState& state, const Coordinate& coord) const {
  const auto rank = state.rank();
  recon_.resize(rank);
  double* p = recon_.data();
  for (std::size_t n = 0; n < state.order(); ++n) {
    const RowVector* cached = prev_row(n, coord[n]);
    const double* row = cached != nullptr ? cached->data() : state.factors.modes[n].row(coord[n]).data();
    if (n == 0) {
      for (Eigen::Index r = 0; r < rank; ++r) p[r] = row[r];
    } else {
      for (Eigen::Index r = 0; r < rank; ++r) p[r] *= row[r];
    }
  }
  return recon_.sum();
}

void Updater::plus_vec_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                           std::size_t mode, Index row) {
  check_row(state, mode, row);
  if (mode + 1 == state.order()) {
    remember_row(state, mode, row);
    kernels::gram_hadamard(state.prev_grams, mode, h_prev_);
    target_.noalias() = state.factors.modes[mode].row(row) * h_prev_;
    add_delta_projection(delta, state, mode, row, target_);
    plus_row(state, mode, row, PlusRule::kTime, target_);
    return;
  }
  const auto rank = state.rank();
  target_.setZero(rank);
  kr_.resize(rank);
  for (std::uint32_t slot : window.registry(mode, row)) {
    const auto& e = window.entry(slot);
    kernels::kr_row(state.factors, mode, e.coord, std::span<double>(kr_.data(), static_cast<std::size_t>(rank)));
    target_ += e.value * kr_;
  }
  plus_row(state, mode, row, PlusRule::kExact, target_);
}

void Updater::plus_rnd_row(const SparseWindow& window, const DeltaChange& delta, CpdState& state,
                           std::size_t mode, Index row) {
  check_row(state, mode, row);
  if (mode + 1 == state.order() || window.degree(mode, row) <= config_.theta) {
    plus_vec_row(window, delta, state, mode, row);
    return;
  }
  fill_sample(window, delta, state, mode, row, sample_);
  plus_row_with_sample(delta, state, mode, row, sample_);
}

void Updater::plus_row_with_sample(const DeltaChange& delta, CpdState& state, std::size_t mode,
                                   Index row, const ResidualSample& sample) {
  check_row(state, mode, row);
  remember_row(state, mode, row);
  kernels::gram_hadamard(state.prev_grams, mode, h_prev_);
  target_.noalias() = state.factors.modes[mode].row(row) * h_prev_;
  add_delta_projection(delta, state, mode, row, target_);
  add_sample_projection(sample, state, mode, target_);
  plus_row(state, mode, row, PlusRule::kSampled, target_);
}

// Coordinate descent over the entries of one row. `target` holds, per column
// k, everything in the numerator that does not depend on the row being
// solved; the coupling to the other entries of the row comes from H.
void Updater::plus_row(CpdState& state, std::size_t mode, Index row, PlusRule rule,
                       const RowVector& target) {
  remember_row(state, mode, row);
  const auto rank = state.rank();
  kernels::gram_hadamard(state.grams, mode, h_);
  const DenseMatrix& h = h_;
  const RowVector& b = *prev_row(mode, row);
  auto a = state.factors.modes[mode].row(row);
  DenseMatrix& q = state.grams[mode];
  DenseMatrix& u = state.prev_grams[mode];
  const double eta = config_.eta;

  // H does not depend on this mode's factors, so the Grams of this mode are
  // corrected once for the whole row after the sweep over its entries.
  old_row_ = a;
  const RowVector& old_row = old_row_;
  double* av = a.data();
  const double* hv = h.data();
  for (Eigen::Index k = 0; k < rank; ++k) {
    const double* hk = hv + k * rank;
    const double c = hk[k];
    if (c == 0.0) {
      ++stats_.zero_denominator_skips;
      if (observer_) observer_(mode, row, k);
      continue;
    }
    double d = 0.0;
    for (Eigen::Index r = 0; r < k; ++r) d += av[r] * hk[r];
    for (Eigen::Index r = k + 1; r < rank; ++r) d += av[r] * hk[r];
    double next = (target[k] - d) / c;
    if (!std::isfinite(next)) {
      throw Error(ErrorCode::kNonFinite, "coordinate update produced NaN/Inf in mode " +
                                             std::to_string(mode) + ", row " + std::to_string(row));
    }
    if (next > eta || next < -eta) {
      next = std::clamp(next, -eta, eta);
      ++stats_.clipped_entries;
    }
    av[k] = next;
    if (observer_) observer_(mode, row, k);
  }
  q.noalias() -= old_row.transpose() * old_row;
  q.noalias() += a.transpose() * a;
  u.noalias() += b.transpose() * (a - old_row);
  ++row_updates_[mode];
  if (rule == PlusRule::kSampled) ++stats_.sampled_rows;
  else ++stats_.exact_rows;
}

}  // namespace sns
