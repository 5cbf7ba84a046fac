#include "sns/kernels.hpp"

#include <cmath>
#include <string>

#include "sns/error.hpp"

namespace sns {

std::vector<Index> FactorSet::dims() const {
  std::vector<Index> d;
  d.reserve(modes.size());
  for (const auto& a : modes) d.push_back(static_cast<Index>(a.rows()));
  return d;
}

bool FactorSet::all_finite() const {
  for (const auto& a : modes) {
    if (!a.allFinite()) return false;
  }
  return true;
}

namespace kernels {

namespace {

void check_coordinate(const FactorSet& factors, std::size_t skip, const Coordinate& coord) {
  if (coord.size() != factors.order()) {
    throw Error(ErrorCode::kIndexOutOfRange, "coordinate order " + std::to_string(coord.size()) +
                                                 " differs from factor order " +
                                                 std::to_string(factors.order()));
  }
  for (std::size_t n = 0; n < factors.order(); ++n) {
    if (n == skip) continue;
    if (coord[n] >= factors.modes[n].rows()) {
      throw Error(ErrorCode::kIndexOutOfRange, "index " + std::to_string(coord[n]) +
                                                   " out of range for mode " + std::to_string(n));
    }
  }
}

void check_shapes(const SparseWindow& window, const FactorSet& factors, std::size_t mode) {
  if (factors.order() != window.order() || mode >= factors.order()) {
    throw Error(ErrorCode::kShapeMismatch, "factor order does not match window order");
  }
  const auto rank = factors.rank();
  for (std::size_t n = 0; n < factors.order(); ++n) {
    if (factors.modes[n].rows() != window.dims()[n] || factors.modes[n].cols() != rank) {
      throw Error(ErrorCode::kShapeMismatch, "factor " + std::to_string(n) + " is " +
                                                 std::to_string(factors.modes[n].rows()) + "x" +
                                                 std::to_string(factors.modes[n].cols()) +
                                                 ", expected " + std::to_string(window.dims()[n]) +
                                                 "x" + std::to_string(rank));
    }
  }
}

// Unchecked hot-path variant.
inline void kr_row_into(const FactorSet& factors, std::size_t skip, const Coordinate& coord,
                        double* out, Eigen::Index rank) {
  for (Eigen::Index r = 0; r < rank; ++r) out[r] = 1.0;
  for (std::size_t n = 0; n < factors.order(); ++n) {
    if (n == skip) continue;
    const double* row = factors.modes[n].data() + static_cast<Eigen::Index>(coord[n]) * rank;
    for (Eigen::Index r = 0; r < rank; ++r) out[r] *= row[r];
  }
}

}  // namespace

void kr_row(const FactorSet& factors, std::size_t skip, const Coordinate& coord,
            std::span<double> out) {
  check_coordinate(factors, skip, coord);
  if (static_cast<Eigen::Index>(out.size()) != factors.rank()) {
    throw Error(ErrorCode::kShapeMismatch, "output span length differs from rank");
  }
  kr_row_into(factors, skip, coord, out.data(), factors.rank());
}

RowVector kr_row(const FactorSet& factors, std::size_t skip, const Coordinate& coord) {
  RowVector out(factors.rank());
  kr_row(factors, skip, coord, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

DenseMatrix mttkrp(const SparseWindow& window, const DeltaChange* pending,
                   const FactorSet& factors, std::size_t mode) {
  check_shapes(window, factors, mode);
  const auto rank = factors.rank();
  DenseMatrix out = DenseMatrix::Zero(factors.modes[mode].rows(), rank);
  std::vector<double> k(static_cast<std::size_t>(rank));
  for (const auto& e : window.entries()) {
    kr_row_into(factors, mode, e.coord, k.data(), rank);
    double* dst = out.data() + static_cast<Eigen::Index>(e.coord[mode]) * rank;
    for (Eigen::Index r = 0; r < rank; ++r) dst[r] += e.value * k[static_cast<std::size_t>(r)];
  }
  if (pending != nullptr) {
    for (const auto& ch : pending->entries()) {
      window.check_coordinate(ch.coord);
      kr_row_into(factors, mode, ch.coord, k.data(), rank);
      double* dst = out.data() + static_cast<Eigen::Index>(ch.coord[mode]) * rank;
      for (Eigen::Index r = 0; r < rank; ++r) dst[r] += ch.delta * k[static_cast<std::size_t>(r)];
    }
  }
  return out;
}

DenseMatrix mttkrp_omp(const SparseWindow& window, const FactorSet& factors, std::size_t mode) {
  check_shapes(window, factors, mode);
  const auto rank = factors.rank();
  const auto rows = static_cast<long>(factors.modes[mode].rows());
  DenseMatrix out = DenseMatrix::Zero(rows, rank);
#pragma omp parallel
  {
    std::vector<double> k(static_cast<std::size_t>(rank));
#pragma omp for schedule(dynamic, 16)
    for (long i = 0; i < rows; ++i) {
      double* dst = out.data() + i * rank;
      for (std::uint32_t slot : window.registry(mode, static_cast<Index>(i))) {
        const auto& e = window.entry(slot);
        kr_row_into(factors, mode, e.coord, k.data(), rank);
        for (Eigen::Index r = 0; r < rank; ++r) dst[r] += e.value * k[static_cast<std::size_t>(r)];
      }
    }
  }
  return out;
}

DenseMatrix gram(const DenseMatrix& a) {
  DenseMatrix g = a.transpose() * a;
  return g;
}

DenseMatrix gram_hadamard(std::span<const DenseMatrix> grams, std::size_t skip) {
  DenseMatrix h;
  gram_hadamard(grams, skip, h);
  return h;
}

void gram_hadamard(std::span<const DenseMatrix> grams, std::size_t skip, DenseMatrix& out) {
  if (grams.empty()) throw Error(ErrorCode::kShapeMismatch, "no Gram matrices given");
  const auto rank = grams.front().rows();
  bool first = true;
  for (std::size_t n = 0; n < grams.size(); ++n) {
    if (grams[n].rows() != rank || grams[n].cols() != rank) {
      throw Error(ErrorCode::kShapeMismatch, "Gram " + std::to_string(n) + " is not " +
                                                 std::to_string(rank) + "x" + std::to_string(rank));
    }
    if (n == skip) continue;
    if (first) out = grams[n];
    else out.array() *= grams[n].array();
    first = false;
  }
  if (first) out.setOnes(rank, rank);
}

DenseMatrix pinv_psd(const DenseMatrix& h, double tol) {
  if (h.rows() != h.cols()) throw Error(ErrorCode::kShapeMismatch, "pseudoinverse needs a square matrix");
  if (!h.allFinite()) throw Error(ErrorCode::kNonFinite, "matrix to pseudo-invert has NaN or Inf");
  const auto n = h.rows();
  if (n == 0) return h;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(h), Eigen::ComputeEigenvectors);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double cutoff = tol * values.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv[i] = std::abs(values[i]) > cutoff ? 1.0 / values[i] : 0.0;
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  DenseMatrix out = v * inv.asDiagonal() * v.transpose();
  return out;
}

double reconstruct_entry(const FactorSet& factors, const Vector* weights, const Coordinate& coord) {
  check_coordinate(factors, factors.order(), coord);
  const auto rank = factors.rank();
  if (weights != nullptr && weights->size() != rank) {
    throw Error(ErrorCode::kShapeMismatch, "weight vector length differs from rank");
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rank; ++r) {
    double p = weights != nullptr ? (*weights)[r] : 1.0;
    for (std::size_t n = 0; n < factors.order(); ++n) p *= factors.modes[n](coord[n], r);
    sum += p;
  }
  return sum;
}

}  // namespace kernels
}  // namespace sns
