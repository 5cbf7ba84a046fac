#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sns/factors.hpp"
#include "sns/stream_window.hpp"

namespace sns {

// Decomposition state owned by one engine.
struct CpdState {
  FactorSet factors;
  std::vector<DenseMatrix> grams;       // A^(m)T A^(m)
  std::vector<DenseMatrix> prev_grams;  // A_prev^(m)T A^(m), A_prev = factor at event start
  Vector weights;                       // column weights; all ones unless normalized
  std::uint64_t seed = 0;

  std::size_t order() const noexcept { return factors.order(); }
  Eigen::Index rank() const noexcept { return factors.rank(); }
};

// Uniform [0, 1) entries from a seeded generator; Grams built from scratch.
CpdState init_factors(const std::vector<Index>& dims, Eigen::Index rank, std::uint64_t seed);

// Wraps given factors into a state with fresh Grams and unit weights.
CpdState make_state(FactorSet factors, std::uint64_t seed = 0);

// Exact A^T A for every mode; prev_grams reset to the same values.
void rebuild_grams(CpdState& state);

// Largest Frobenius distance between maintained and recomputed Grams.
double gram_drift(const CpdState& state);

struct Fitness {
  double value = 0.0;          // 1 - ||X - Xhat|| / ||X||
  double squared_error = 0.0;  // ||X - Xhat||^2
  double data_norm = 0.0;      // ||X||
  bool zero_norm = false;      // X == 0, value reported as 0
};

// Exact fitness without enumerating zero entries: the residual over zero
// entries is ||Xhat||^2 (from Grams) minus the model mass on the non-zeros.
Fitness fitness(const SparseWindow& window, const FactorSet& factors,
                const Vector* weights = nullptr);
inline Fitness fitness(const SparseWindow& window, const CpdState& state) {
  return fitness(window, state.factors, &state.weights);
}

// target / als; nullopt when the ALS fitness is zero.
std::optional<double> relative_fitness(double target_fitness, double als_fitness);

// One ALS pass over modes 0..M-1 (weights are ignored and must be ones).
// Returns the fitness after the pass.
double als_sweep(const SparseWindow& window, CpdState& state);

struct AlsOptions {
  int max_sweeps = 100;
  double tolerance = 1e-4;  // stop when |delta fitness| falls below this
};

struct AlsResult {
  CpdState state;
  std::vector<double> fitness_history;  // one value per sweep
};

// Seeded uniform start followed by sweeps until convergence.
AlsResult als_fit(const SparseWindow& window, Eigen::Index rank, std::uint64_t seed,
                  const AlsOptions& options = {});

// Rescales each component so every mode carries the same column norm. The
// modeled tensor is unchanged.
void balance_columns(CpdState& state);

// Moves column norms of every mode into `weights` and leaves unit columns.
void normalize_into_weights(CpdState& state);

// Text checkpoint: shapes, row-major values, weights, seed.
void write_checkpoint(std::ostream& out, const CpdState& state);
CpdState read_checkpoint(std::istream& in);

}  // namespace sns
