#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "sns/error.hpp"
#include "sns/kernels.hpp"

using namespace sns;
namespace k = sns::kernels;

TEST_CASE("kr_row on all-ones factors is all ones") {
  FactorSet f;
  for (int m = 0; m < 3; ++m) f.modes.push_back(DenseMatrix::Ones(3, 4));
  CHECK(k::kr_row(f, 1, {0, 2, 1}) == RowVector::Ones(4));
}

TEST_CASE("kr_row multiplies the addressed rows of the other modes") {
  FactorSet f;
  f.modes.push_back(DenseMatrix::Zero(2, 2));
  DenseMatrix b(2, 2);
  b << 0, 0, 1, 2;
  DenseMatrix c(1, 2);
  c << 3, 4;
  f.modes.push_back(b);
  f.modes.push_back(c);
  const RowVector got = k::kr_row(f, 0, {0, 1, 0});
  CHECK(got[0] == 3.0);
  CHECK(got[1] == 8.0);
  CHECK_THROWS_AS(k::kr_row(f, 0, {0, 2, 0}), Error);
}

TEST_CASE("kr_row matches the materialized Khatri-Rao product") {
  std::mt19937_64 rng(3);
  const std::vector<Index> dims{3, 4, 2, 3};
  const FactorSet f = oracle::random_factors(dims, 3, rng);
  const oracle::Dense shape(dims);
  for (std::size_t skip = 0; skip < dims.size(); ++skip) {
    const Eigen::MatrixXd kr = oracle::khatri_rao(f, skip);
    for (std::size_t off = 0; off < shape.size(); ++off) {
      const Coordinate c = shape.coord(off);
      const auto row = static_cast<Eigen::Index>(oracle::unfold_column(shape, skip, c));
      CHECK((k::kr_row(f, skip, c) - kr.row(row)).norm() < 1e-14);
    }
  }
}

TEST_CASE("mttkrp: empty window, single entry, dense oracle") {
  SparseWindow empty({3, 3, 3});
  FactorSet ones;
  for (int m = 0; m < 3; ++m) ones.modes.push_back(DenseMatrix::Ones(3, 2));
  CHECK(k::mttkrp(empty, nullptr, ones, 0).isZero());

  SparseWindow single({3, 3, 3});
  single.add({0, 0, 0}, 7.0, 1);
  const DenseMatrix u = k::mttkrp(single, nullptr, ones, 0);
  CHECK(u.row(0) == RowVector::Constant(2, 7.0));
  CHECK(u.bottomRows(2).isZero());

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Index> dims{4, 3, 5};
    const SparseWindow w = oracle::random_window(dims, 20, rng);
    const FactorSet f = oracle::random_factors(dims, 3, rng);
    const oracle::Dense x = oracle::densify(w);
    for (std::size_t m = 0; m < 3; ++m) {
      const Eigen::MatrixXd want = oracle::unfold(x, m) * oracle::khatri_rao(f, m);
      CHECK(oracle::relative_error(k::mttkrp(w, nullptr, f, m), want) < 1e-12);
      CHECK(oracle::relative_error(k::mttkrp_omp(w, f, m), want) < 1e-12);
    }
  }
}

TEST_CASE("mttkrp is linear in a pending change") {
  std::mt19937_64 rng(23);
  const std::vector<Index> dims{3, 4, 3};
  const SparseWindow w = oracle::random_window(dims, 15, rng);
  const FactorSet f = oracle::random_factors(dims, 2, rng);
  DeltaChange d;
  d.changes[0] = {{1, 1, 2}, -1.5};
  d.changes[1] = {{1, 1, 1}, 1.5};
  d.count = 2;
  SparseWindow only_delta(dims);
  only_delta.add(d.changes[0].coord, d.changes[0].delta, 1);
  only_delta.add(d.changes[1].coord, d.changes[1].delta, 1);
  for (std::size_t m = 0; m < 3; ++m) {
    const DenseMatrix sum = k::mttkrp(w, nullptr, f, m) + k::mttkrp(only_delta, nullptr, f, m);
    CHECK(oracle::relative_error(k::mttkrp(w, &d, f, m), sum) < 1e-13);
  }
}

TEST_CASE("mttkrp rejects mismatched shapes") {
  SparseWindow w({3, 3, 3});
  FactorSet f;
  for (int m = 0; m < 3; ++m) f.modes.push_back(DenseMatrix::Ones(m == 1 ? 4 : 3, 2));
  try {
    k::mttkrp(w, nullptr, f, 0);
    FAIL("expected a shape mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("gram_hadamard: identities, hand example, Khatri-Rao identity") {
  std::vector<DenseMatrix> ids(3, DenseMatrix::Identity(3, 3));
  CHECK(k::gram_hadamard(ids, 0) == DenseMatrix::Identity(3, 3));

  DenseMatrix g0 = DenseMatrix::Constant(2, 2, 99.0), g1(2, 2), g2(2, 2);
  g1 << 1, 2, 2, 5;
  g2 << 2, 0, 0, 3;
  const std::vector<DenseMatrix> gs{g0, g1, g2};
  DenseMatrix want(2, 2);
  want << 2, 0, 0, 15;
  CHECK(k::gram_hadamard(gs, 0) == want);

  std::mt19937_64 rng(29);
  const std::vector<Index> dims{3, 4, 2, 3};
  const FactorSet f = oracle::random_factors(dims, 4, rng);
  std::vector<DenseMatrix> grams;
  for (const auto& a : f.modes) grams.push_back(k::gram(a));
  for (std::size_t skip = 0; skip < dims.size(); ++skip) {
    const Eigen::MatrixXd kr = oracle::khatri_rao(f, skip);
    CHECK(oracle::relative_error(k::gram_hadamard(grams, skip), kr.transpose() * kr) < 1e-12);
  }
  const std::vector<DenseMatrix> bad{DenseMatrix::Ones(2, 2), DenseMatrix::Ones(3, 3)};
  CHECK_THROWS_AS(k::gram_hadamard(bad, 0), Error);
}

TEST_CASE("pinv_psd: identity, singular diagonal, Penrose conditions") {
  CHECK(oracle::relative_error(k::pinv_psd(DenseMatrix::Identity(4, 4)), DenseMatrix::Identity(4, 4)) < 1e-14);
  DenseMatrix d = DenseMatrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const DenseMatrix p = k::pinv_psd(d);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(1, 1) == doctest::Approx(0.0));
  CHECK(std::abs(p(0, 1)) < 1e-15);

  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int rank_deficit = trial % 3;
    Eigen::MatrixXd b(6, 6 - rank_deficit);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
    const DenseMatrix h = b * b.transpose();
    const DenseMatrix hp = k::pinv_psd(h);
    CHECK(oracle::relative_error(h * hp * h, h) < 1e-8);
    CHECK(oracle::relative_error(hp * h * hp, hp) < 1e-8);
    CHECK(oracle::relative_error((h * hp).transpose(), h * hp) < 1e-8);
    CHECK(oracle::relative_error((hp * h).transpose(), hp * h) < 1e-8);
  }
  DenseMatrix bad = DenseMatrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  try {
    k::pinv_psd(bad);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
  }
}

TEST_CASE("reconstruct_entry: weights, hand rank-one value, dense oracle, multilinearity") {
  FactorSet f;
  for (int m = 0; m < 3; ++m) f.modes.push_back(DenseMatrix::Ones(2, 1));
  Vector w(1);
  w << 3.0;
  CHECK(k::reconstruct_entry(f, &w, {1, 0, 1}) == 3.0);

  FactorSet r1;
  DenseMatrix a(2, 1), b(2, 1), c(2, 1);
  a << 2, 3;
  b << 5, 7;
  c << 11, 13;
  r1.modes = {a, b, c};
  CHECK(k::reconstruct_entry(r1, nullptr, {1, 0, 1}) == 3.0 * 5.0 * 13.0);

  std::mt19937_64 rng(37);
  const std::vector<Index> dims{2, 2, 2};
  FactorSet f2 = oracle::random_factors(dims, 3, rng);
  const oracle::Dense x = oracle::reconstruct(f2);
  for (std::size_t off = 0; off < x.size(); ++off) {
    CHECK(k::reconstruct_entry(f2, nullptr, x.coord(off)) == doctest::Approx(x.values[off]).epsilon(1e-12));
  }
  const Coordinate c0{1, 0, 1};
  const double base = k::reconstruct_entry(f2, nullptr, c0);
  const RowVector row = f2.modes[1].row(0);
  f2.modes[1].row(0) = 2.5 * row;
  CHECK(k::reconstruct_entry(f2, nullptr, c0) == doctest::Approx(2.5 * base).epsilon(1e-12));
  CHECK_THROWS_AS(k::reconstruct_entry(f2, nullptr, {2, 0, 0}), Error);
}
