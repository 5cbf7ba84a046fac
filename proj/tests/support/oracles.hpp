#pragma once

// Independent reference computations for tests. Everything here works on
// dense data and straightforward loops; none of it calls the library's
// kernels, so agreement is meaningful.

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sns/cpd_state.hpp"
#include "sns/stream_window.hpp"

namespace oracle {

using sns::Coordinate;
using sns::Index;
using sns::Timestamp;

// Window recomputed from the raw tuples at `clock`: a tuple that arrived at
// t_n with t_n <= clock < t_n + W*T sits at time index W-1-floor((clock-t_n)/T).
inline std::map<Coordinate, double> rebuild_window(const std::vector<sns::TimestampedTuple>& tuples,
                                                   Timestamp period, Index window, Timestamp clock) {
  std::map<Coordinate, double> out;
  for (const auto& t : tuples) {
    if (t.time > clock) continue;
    const Timestamp age = (clock - t.time) / period;
    if (age >= static_cast<Timestamp>(window)) continue;
    out[t.indices.with_appended(window - 1 - static_cast<Index>(age))] += t.value;
  }
  for (auto it = out.begin(); it != out.end();) {
    if (it->second == 0.0) it = out.erase(it);
    else ++it;
  }
  return out;
}

inline std::map<Coordinate, double> as_map(const sns::SparseWindow& w) {
  std::map<Coordinate, double> out;
  for (const auto& e : w.entries()) out[e.coord] = e.value;
  return out;
}

// Dense tensor, first mode varying fastest.
struct Dense {
  std::vector<Index> dims;
  std::vector<double> values;

  explicit Dense(std::vector<Index> d) : dims(std::move(d)) {
    std::size_t n = 1;
    for (auto x : dims) n *= x;
    values.assign(n, 0.0);
  }

  std::size_t offset(const Coordinate& c) const {
    std::size_t off = 0, stride = 1;
    for (std::size_t m = 0; m < dims.size(); ++m) {
      off += c[m] * stride;
      stride *= dims[m];
    }
    return off;
  }
  Coordinate coord(std::size_t off) const {
    Coordinate c;
    c.order = static_cast<std::uint8_t>(dims.size());
    for (std::size_t m = 0; m < dims.size(); ++m) {
      c[m] = static_cast<Index>(off % dims[m]);
      off /= dims[m];
    }
    return c;
  }
  double& at(const Coordinate& c) { return values[offset(c)]; }
  double at(const Coordinate& c) const { return values[offset(c)]; }
  std::size_t size() const { return values.size(); }
};

inline Dense densify(const sns::SparseWindow& w) {
  Dense d(w.dims());
  for (const auto& e : w.entries()) d.at(e.coord) = e.value;
  return d;
}

// Column index of the mode-m unfolding: remaining modes, lowest fastest.
inline std::size_t unfold_column(const Dense& x, std::size_t mode, const Coordinate& c) {
  std::size_t col = 0, stride = 1;
  for (std::size_t n = 0; n < x.dims.size(); ++n) {
    if (n == mode) continue;
    col += c[n] * stride;
    stride *= x.dims[n];
  }
  return col;
}

inline Eigen::MatrixXd unfold(const Dense& x, std::size_t mode) {
  const std::size_t cols = x.size() / x.dims[mode];
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.dims[mode], static_cast<Eigen::Index>(cols));
  for (std::size_t off = 0; off < x.size(); ++off) {
    const Coordinate c = x.coord(off);
    out(c[mode], static_cast<Eigen::Index>(unfold_column(x, mode, c))) = x.values[off];
  }
  return out;
}

// Materialized Khatri-Rao product of all factors except `skip`, rows
// aligned with unfold() columns.
inline Eigen::MatrixXd khatri_rao(const sns::FactorSet& f, std::size_t skip) {
  Dense shape(f.dims());
  const auto rank = f.rank();
  const std::size_t rows = shape.size() / shape.dims[skip];
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), rank);
  for (std::size_t off = 0; off < shape.size(); ++off) {
    const Coordinate c = shape.coord(off);
    if (c[skip] != 0) continue;
    const auto row = static_cast<Eigen::Index>(unfold_column(shape, skip, c));
    for (Eigen::Index r = 0; r < rank; ++r) {
      double p = 1.0;
      for (std::size_t n = 0; n < f.order(); ++n) {
        if (n != skip) p *= f.modes[n](c[n], r);
      }
      k(row, r) = p;
    }
  }
  return k;
}

inline Dense reconstruct(const sns::FactorSet& f, const sns::Vector* weights = nullptr) {
  Dense x(f.dims());
  for (std::size_t off = 0; off < x.size(); ++off) {
    const Coordinate c = x.coord(off);
    double s = 0.0;
    for (Eigen::Index r = 0; r < f.rank(); ++r) {
      double p = weights ? (*weights)[r] : 1.0;
      for (std::size_t n = 0; n < f.order(); ++n) p *= f.modes[n](c[n], r);
      s += p;
    }
    x.values[off] = s;
  }
  return x;
}

inline double squared_error(const Dense& x, const Dense& y) {
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x.values[i]) - y.values[i];
    s += d * d;
  }
  return static_cast<double>(s);
}

inline double dense_fitness(const Dense& x, const sns::FactorSet& f, const sns::Vector* weights = nullptr) {
  const Dense xhat = reconstruct(f, weights);
  long double norm = 0;
  for (double v : x.values) norm += static_cast<long double>(v) * v;
  if (norm == 0) return 0.0;
  return 1.0 - std::sqrt(squared_error(x, xhat)) / std::sqrt(static_cast<double>(norm));
}

// Minimum-norm least-squares row: argmin_a || x_row - a K^T ||.
inline Eigen::RowVectorXd least_squares_row(const Dense& x, const sns::FactorSet& f, std::size_t mode,
                                            Index row) {
  const Eigen::MatrixXd k = khatri_rao(f, mode);
  const Eigen::VectorXd target = unfold(x, mode).row(row).transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(k);
  cod.setThreshold(1e-12);
  return cod.solve(target).transpose();
}

// Squared error restricted to the coordinates whose mode-th index is `row`.
inline double row_objective(const Dense& x, const sns::FactorSet& f, std::size_t mode, Index row) {
  const Dense xhat = reconstruct(f);
  long double s = 0;
  for (std::size_t off = 0; off < x.size(); ++off) {
    if (x.coord(off)[mode] != row) continue;
    const long double d = static_cast<long double>(x.values[off]) - xhat.values[off];
    s += d * d;
  }
  return static_cast<double>(s);
}

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a.cols(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index r = 0; r < a.cols(); ++r) {
      for (Eigen::Index s = 0; s < a.cols(); ++s) g(r, s) += a(i, r) * a(i, s);
    }
  }
  return g;
}

inline double relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

// Random sparse window with `nnz` distinct non-zeros (integer-valued when
// `integers` is set).
inline sns::SparseWindow random_window(const std::vector<Index>& dims, std::size_t nnz, std::mt19937_64& rng,
                                       bool integers = false) {
  sns::SparseWindow w(dims);
  std::uniform_real_distribution<double> value(-2.0, 2.0);
  std::uniform_int_distribution<int> ivalue(1, 9);
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  nnz = std::min(nnz, total);
  while (w.nnz() < nnz) {
    Coordinate c;
    c.order = static_cast<std::uint8_t>(dims.size());
    for (std::size_t m = 0; m < dims.size(); ++m) {
      std::uniform_int_distribution<Index> pick(0, dims[m] - 1);
      c[m] = pick(rng);
    }
    if (w.contains(c)) continue;
    double v = integers ? ivalue(rng) : value(rng);
    if (v == 0.0) v = 1.0;
    w.add(c, v, 1);
  }
  return w;
}

inline sns::FactorSet random_factors(const std::vector<Index>& dims, Eigen::Index rank, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  sns::FactorSet f;
  for (auto d : dims) {
    sns::DenseMatrix a(d, rank);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
    f.modes.push_back(a);
  }
  return f;
}

// Window holding exactly the CP reconstruction of `f` on every coordinate.
inline sns::SparseWindow exact_window(const sns::FactorSet& f) {
  const Dense x = reconstruct(f);
  sns::SparseWindow w(f.dims());
  for (std::size_t off = 0; off < x.size(); ++off) {
    if (x.values[off] != 0.0) w.add(x.coord(off), x.values[off], 1);
  }
  return w;
}

}  // namespace oracle
