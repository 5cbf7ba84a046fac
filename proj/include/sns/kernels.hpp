#pragma once

// Dense small-matrix and sparse-tensor kernels shared by ALS and the online
// updates. Every `*_omp` kernel has a serial counterpart that is kept as the
// reference implementation; tests check them against each other and the
// benchmark target compares their speed.

#include <span>

#include "sns/factors.hpp"
#include "sns/stream_window.hpp"

namespace sns::kernels {

// Row of the Khatri-Rao product of all factors except `skip`, addressed by
// the coordinate: out[r] = prod_{n != skip} A^(n)(coord[n], r).
void kr_row(const FactorSet& factors, std::size_t skip, const Coordinate& coord,
            std::span<double> out);
RowVector kr_row(const FactorSet& factors, std::size_t skip, const Coordinate& coord);

// (X + pending)_(mode) * K^(mode). `pending` may be null; when given it is
// treated as not yet applied to `window`. Serial scatter over the non-zeros.
DenseMatrix mttkrp(const SparseWindow& window, const DeltaChange* pending,
                   const FactorSet& factors, std::size_t mode);

// Same product, parallel over output rows. Each row sums its registry in
// registry order, so the result does not depend on the thread count.
DenseMatrix mttkrp_omp(const SparseWindow& window, const FactorSet& factors, std::size_t mode);

DenseMatrix gram(const DenseMatrix& a);

// Hadamard product of grams[n] over n != skip.
DenseMatrix gram_hadamard(std::span<const DenseMatrix> grams, std::size_t skip);
// Same, into `out`, which keeps its storage when already R x R.
void gram_hadamard(std::span<const DenseMatrix> grams, std::size_t skip, DenseMatrix& out);

inline constexpr double kPinvTolerance = 1e-10;

// Moore-Penrose pseudoinverse of a symmetric matrix through its
// eigendecomposition; eigenvalues with |lambda| <= tol * max|lambda| are
// treated as zero.
DenseMatrix pinv_psd(const DenseMatrix& h, double tol = kPinvTolerance);

// sum_r weights[r] * prod_m A^(m)(coord[m], r); null weights means all ones.
double reconstruct_entry(const FactorSet& factors, const Vector* weights, const Coordinate& coord);

}  // namespace sns::kernels
