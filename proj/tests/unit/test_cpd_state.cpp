#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sns/cpd_state.hpp"
#include "sns/error.hpp"
#include "sns/kernels.hpp"

using namespace sns;

TEST_CASE("init_factors is deterministic, shaped, uniform in [0,1), with exact Grams") {
  const CpdState a = init_factors({2, 2, 2}, 1, 42);
  const CpdState b = init_factors({2, 2, 2}, 1, 42);
  REQUIRE(a.order() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(a.factors.modes[m].rows() == 2);
    CHECK(a.factors.modes[m].cols() == 1);
    CHECK(a.factors.modes[m] == b.factors.modes[m]);
  }
  const CpdState c = init_factors({30, 20, 10}, 5, 7);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(c.factors.modes[m].minCoeff() >= 0.0);
    CHECK(c.factors.modes[m].maxCoeff() < 1.0);
    CHECK(oracle::relative_error(c.grams[m], oracle::gram(c.factors.modes[m])) < 1e-14);
    CHECK(c.prev_grams[m] == c.grams[m]);
  }
  CHECK(init_factors({3, 3}, 2, 8).factors.modes[0] != c.factors.modes[0].topLeftCorner(3, 2));
  CHECK_THROWS_AS(init_factors({3, 3}, 0, 1), Error);
}

TEST_CASE("rebuild_grams: hand values and zero factors") {
  FactorSet f;
  DenseMatrix a(2, 2);
  a << 1, 0, 0, 2;
  f.modes = {a, DenseMatrix::Zero(3, 2)};
  CpdState s = make_state(f);
  DenseMatrix want(2, 2);
  want << 1, 0, 0, 4;
  CHECK(s.grams[0] == want);
  CHECK(s.grams[1].isZero());
  s.grams[0](0, 0) = 9.0;
  CHECK(gram_drift(s) == doctest::Approx(8.0));
  rebuild_grams(s);
  CHECK(gram_drift(s) == 0.0);
}

TEST_CASE("fitness: exact model, zero model, dense oracle, zero window") {
  std::mt19937_64 rng(1);
  const std::vector<Index> dims{3, 4, 2};
  const FactorSet f = oracle::random_factors(dims, 2, rng, 0.1, 1.0);
  const SparseWindow exact = oracle::exact_window(f);
  CHECK(fitness(exact, f).value == doctest::Approx(1.0).epsilon(1e-12));

  FactorSet zero = f;
  for (auto& a : zero.modes) a.setZero();
  CHECK(fitness(exact, zero).value == doctest::Approx(0.0).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const SparseWindow w = oracle::random_window(dims, 10, rng);
    const FactorSet g = oracle::random_factors(dims, 3, rng);
    Vector weights = Vector::Random(3).cwiseAbs();
    const double want = oracle::dense_fitness(oracle::densify(w), g, &weights);
    CHECK(fitness(w, g, &weights).value == doctest::Approx(want).epsilon(1e-9));
  }

  const Fitness empty = fitness(SparseWindow(dims), f);
  CHECK(empty.zero_norm);
  CHECK(empty.value == 0.0);
}

TEST_CASE("relative_fitness") {
  CHECK(*relative_fitness(0.5, 0.5) == 1.0);
  CHECK(*relative_fitness(0.36, 0.48) == doctest::Approx(0.75));
  CHECK(!relative_fitness(0.3, 0.0).has_value());
}

TEST_CASE("ALS leaves an exact CP model fixed") {
  std::mt19937_64 rng(2);
  const std::vector<Index> dims{4, 3, 3};
  const FactorSet f = oracle::random_factors(dims, 2, rng, 0.2, 1.0);
  const SparseWindow w = oracle::exact_window(f);
  CpdState s = make_state(f);
  als_sweep(w, s);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(oracle::relative_error(s.factors.modes[m], f.modes[m]) < 1e-8);
  }
}

TEST_CASE("ALS objective is non-increasing and beats the random start") {
  std::mt19937_64 rng(3);
  const std::vector<Index> dims{3, 3, 3};
  const SparseWindow w = oracle::random_window(dims, 14, rng);
  const oracle::Dense x = oracle::densify(w);
  CpdState s = init_factors(dims, 2, 5);
  double previous = oracle::squared_error(x, oracle::reconstruct(s.factors));
  const double start = previous;
  for (int sweep = 0; sweep < 50; ++sweep) {
    als_sweep(w, s);
    const double now = oracle::squared_error(x, oracle::reconstruct(s.factors));
    CHECK(now <= previous + 1e-12 * std::max(1.0, previous));
    previous = now;
  }
  CHECK(previous < start);
}

TEST_CASE("ALS on an empty window gives a zero model and fitness 0") {
  const std::vector<Index> dims{2, 3, 2};
  SparseWindow w(dims);
  CpdState s = init_factors(dims, 2, 9);
  CHECK(als_sweep(w, s) == 0.0);
  CHECK(oracle::reconstruct(s.factors).values == std::vector<double>(12, 0.0));
}

TEST_CASE("als_fit stops on the tolerance and records one fitness per sweep") {
  std::mt19937_64 rng(4);
  const std::vector<Index> dims{5, 4, 3};
  const FactorSet f = oracle::random_factors(dims, 2, rng, 0.1, 1.0);
  const SparseWindow w = oracle::exact_window(f);
  const AlsResult r = als_fit(w, 2, 11, {200, 1e-6});
  REQUIRE(!r.fitness_history.empty());
  CHECK(r.fitness_history.size() < 200);
  CHECK(r.fitness_history.back() > 0.99);
  const AlsResult one = als_fit(w, 2, 11, {1, 0.0});
  CHECK(one.fitness_history.size() == 1);
}

TEST_CASE("balance_columns and normalize_into_weights keep the model") {
  std::mt19937_64 rng(5);
  const std::vector<Index> dims{3, 4, 2};
  CpdState s = make_state(oracle::random_factors(dims, 3, rng));
  s.factors.modes[0] *= 50.0;
  const oracle::Dense before = oracle::reconstruct(s.factors);

  CpdState b = s;
  balance_columns(b);
  const oracle::Dense after_balance = oracle::reconstruct(b.factors, &b.weights);
  CHECK(std::sqrt(oracle::squared_error(before, after_balance)) < 1e-10);
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK(b.factors.modes[0].col(r).norm() == doctest::Approx(b.factors.modes[2].col(r).norm()));
  }
  CHECK(gram_drift(b) < 1e-12);

  CpdState n = s;
  normalize_into_weights(n);
  CHECK(std::sqrt(oracle::squared_error(before, oracle::reconstruct(n.factors, &n.weights))) < 1e-10);
  for (const auto& a : n.factors.modes) {
    for (Eigen::Index r = 0; r < 3; ++r) CHECK(a.col(r).norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("checkpoint round-trips exactly and rejects garbage") {
  std::mt19937_64 rng(6);
  CpdState s = make_state(oracle::random_factors({3, 2, 4}, 3, rng), 77);
  s.weights << 1.5, 0.25, 1e-300;
  std::stringstream io;
  write_checkpoint(io, s);
  const CpdState back = read_checkpoint(io);
  CHECK(back.seed == 77);
  CHECK(back.weights == s.weights);
  for (std::size_t m = 0; m < 3; ++m) CHECK(back.factors.modes[m] == s.factors.modes[m]);

  std::stringstream bad("sns-checkpoint 1\norder 2 rank x\n");
  try {
    read_checkpoint(bad);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
  }
}
