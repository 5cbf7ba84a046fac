#include "sns/cpd_state.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "sns/error.hpp"
#include "sns/kernels.hpp"

namespace sns {

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

CpdState init_factors(const std::vector<Index>& dims, Eigen::Index rank, std::uint64_t seed) {
  if (rank < 1) throw Error(ErrorCode::kRangeError, "rank must be >= 1");
  std::mt19937_64 rng(seed);
  FactorSet f;
  f.modes.reserve(dims.size());
  for (Index n : dims) {
    DenseMatrix a(n, rank);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unit_uniform(rng);
    f.modes.push_back(std::move(a));
  }
  return make_state(std::move(f), seed);
}

CpdState make_state(FactorSet factors, std::uint64_t seed) {
  CpdState s;
  s.factors = std::move(factors);
  s.weights = Vector::Ones(s.factors.rank());
  s.seed = seed;
  rebuild_grams(s);
  return s;
}

void rebuild_grams(CpdState& state) {
  state.grams.resize(state.order());
  for (std::size_t m = 0; m < state.order(); ++m) {
    state.grams[m] = kernels::gram(state.factors.modes[m]);
  }
  state.prev_grams = state.grams;
}

double gram_drift(const CpdState& state) {
  double worst = 0.0;
  for (std::size_t m = 0; m < state.order(); ++m) {
    const DenseMatrix exact = kernels::gram(state.factors.modes[m]);
    worst = std::max(worst, (state.grams[m] - exact).norm());
  }
  return worst;
}

Fitness fitness(const SparseWindow& window, const FactorSet& factors, const Vector* weights) {
  if (factors.order() != window.order()) {
    throw Error(ErrorCode::kShapeMismatch, "factor order does not match window order");
  }
  const auto rank = factors.rank();
  Vector w = weights != nullptr ? *weights : Vector::Ones(rank);
  if (w.size() != rank) throw Error(ErrorCode::kShapeMismatch, "weight vector length differs from rank");

  // ||Xhat||^2 = w^T (*_m A^T A) w
  DenseMatrix h = DenseMatrix::Ones(rank, rank);
  for (const auto& a : factors.modes) h.array() *= kernels::gram(a).array();
  const double model_sq = w.dot(h * w);

  const auto entries = window.entries();
  constexpr long kChunk = 4096;
  const long n = static_cast<long>(entries.size());
  const long chunks = (n + kChunk - 1) / kChunk;
  std::vector<long double> data_part(static_cast<std::size_t>(chunks));
  std::vector<long double> resid_part(static_cast<std::size_t>(chunks));
  std::vector<long double> model_part(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    long double data = 0, resid = 0, model = 0;
    const long end = std::min(n, (c + 1) * kChunk);
    for (long k = c * kChunk; k < end; ++k) {
      const auto& e = entries[static_cast<std::size_t>(k)];
      double xhat = 0.0;
      for (Eigen::Index r = 0; r < rank; ++r) {
        double p = w[r];
        for (std::size_t m = 0; m < factors.order(); ++m) p *= factors.modes[m](e.coord[m], r);
        xhat += p;
      }
      const long double x = e.value;
      data += x * x;
      resid += (x - xhat) * (x - xhat);
      model += static_cast<long double>(xhat) * xhat;
    }
    data_part[static_cast<std::size_t>(c)] = data;
    resid_part[static_cast<std::size_t>(c)] = resid;
    model_part[static_cast<std::size_t>(c)] = model;
  }

  long double data_sq = 0, resid_sq = 0, model_nz = 0;
  for (long c = 0; c < chunks; ++c) {
    data_sq += data_part[static_cast<std::size_t>(c)];
    resid_sq += resid_part[static_cast<std::size_t>(c)];
    model_nz += model_part[static_cast<std::size_t>(c)];
  }
  const long double zero_part = std::max<long double>(0.0L, model_sq - model_nz);

  Fitness f;
  f.squared_error = static_cast<double>(resid_sq + zero_part);
  f.data_norm = std::sqrt(static_cast<double>(data_sq));
  if (f.data_norm == 0.0) {
    f.zero_norm = true;
    f.value = 0.0;
    return f;
  }
  f.value = 1.0 - std::sqrt(f.squared_error) / f.data_norm;
  return f;
}

std::optional<double> relative_fitness(double target_fitness, double als_fitness) {
  if (als_fitness == 0.0) return std::nullopt;
  return target_fitness / als_fitness;
}

double als_sweep(const SparseWindow& window, CpdState& state) {
  for (std::size_t m = 0; m < state.order(); ++m) {
    const DenseMatrix u = kernels::mttkrp_omp(window, state.factors, m);
    const DenseMatrix h = kernels::gram_hadamard(state.grams, m);
    state.factors.modes[m] = u * kernels::pinv_psd(h);
    if (!state.factors.modes[m].allFinite()) {
      throw Error(ErrorCode::kNonFinite, "ALS produced a non-finite factor in mode " + std::to_string(m));
    }
    state.grams[m] = kernels::gram(state.factors.modes[m]);
  }
  state.prev_grams = state.grams;
  return fitness(window, state.factors, nullptr).value;
}

AlsResult als_fit(const SparseWindow& window, Eigen::Index rank, std::uint64_t seed,
                  const AlsOptions& options) {
  AlsResult result{init_factors(window.dims(), rank, seed), {}};
  double previous = fitness(window, result.state.factors, nullptr).value;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    const double current = als_sweep(window, result.state);
    result.fitness_history.push_back(current);
    if (std::abs(current - previous) < options.tolerance) break;
    previous = current;
  }
  return result;
}

void balance_columns(CpdState& state) {
  const auto order = state.order();
  for (Eigen::Index r = 0; r < state.rank(); ++r) {
    std::vector<double> norms(order);
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t m = 0; m < order; ++m) {
      norms[m] = state.factors.modes[m].col(r).norm();
      if (norms[m] == 0.0) zero = true;
      else log_sum += std::log(norms[m]);
    }
    if (zero) continue;
    const double target = std::exp((log_sum + std::log(state.weights[r])) / static_cast<double>(order));
    for (std::size_t m = 0; m < order; ++m) state.factors.modes[m].col(r) *= target / norms[m];
    state.weights[r] = 1.0;
  }
  rebuild_grams(state);
}

void normalize_into_weights(CpdState& state) {
  for (Eigen::Index r = 0; r < state.rank(); ++r) {
    for (auto& a : state.factors.modes) {
      const double norm = a.col(r).norm();
      if (norm == 0.0) continue;
      a.col(r) /= norm;
      state.weights[r] *= norm;
    }
  }
  rebuild_grams(state);
}

// ---------------------------------------------------------------------------
// Checkpoint format (whitespace separated, one record per line):
//   sns-checkpoint 1
//   order <M> rank <R> seed <S>
//   dims <N_1> ... <N_M>
//   weights <w_1> ... <w_R>
//   mode <m>            followed by N_m lines of R values
// Doubles are written with 17 significant digits, which round-trips exactly.

void write_checkpoint(std::ostream& out, const CpdState& state) {
  out << "sns-checkpoint 1\n";
  out << "order " << state.order() << " rank " << state.rank() << " seed " << state.seed << "\n";
  out << std::setprecision(17);
  out << "dims";
  for (const auto& a : state.factors.modes) out << ' ' << a.rows();
  out << "\nweights";
  for (Eigen::Index r = 0; r < state.weights.size(); ++r) out << ' ' << state.weights[r];
  out << "\n";
  for (std::size_t m = 0; m < state.order(); ++m) {
    const auto& a = state.factors.modes[m];
    out << "mode " << m << "\n";
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index r = 0; r < a.cols(); ++r) out << (r ? " " : "") << a(i, r);
      out << "\n";
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed to write checkpoint");
}

CpdState read_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) {
      throw Error(ErrorCode::kParseError, "checkpoint: expected '" + word + "', got '" + got + "'");
    }
  };
  auto number = [&](auto& value, const char* what) {
    if (!(in >> value)) throw Error(ErrorCode::kParseError, std::string("checkpoint: bad ") + what);
  };
  expect("sns-checkpoint");
  int version = 0;
  number(version, "version");
  if (version != 1) throw Error(ErrorCode::kParseError, "checkpoint: unsupported version");
  std::size_t order = 0;
  Eigen::Index rank = 0;
  std::uint64_t seed = 0;
  expect("order");
  number(order, "order");
  expect("rank");
  number(rank, "rank");
  expect("seed");
  number(seed, "seed");
  if (order == 0 || order > kMaxOrder || rank < 1) {
    throw Error(ErrorCode::kParseError, "checkpoint: order or rank out of range");
  }
  std::vector<Index> dims(order);
  expect("dims");
  for (auto& d : dims) number(d, "dims");
  Vector weights(rank);
  expect("weights");
  for (Eigen::Index r = 0; r < rank; ++r) number(weights[r], "weights");
  FactorSet f;
  for (std::size_t m = 0; m < order; ++m) {
    expect("mode");
    std::size_t idx = 0;
    number(idx, "mode index");
    if (idx != m) throw Error(ErrorCode::kParseError, "checkpoint: modes out of order");
    DenseMatrix a(dims[m], rank);
    for (Eigen::Index i = 0; i < a.size(); ++i) number(a.data()[i], "factor value");
    f.modes.push_back(std::move(a));
  }
  CpdState s = make_state(std::move(f), seed);
  s.weights = weights;
  return s;
}

}  // namespace sns
