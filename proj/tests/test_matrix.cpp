#include <doctest.h>

#include <random>

#include "grassbin/error.hpp"
#include "grassbin/matrix.hpp"
#include "support.hpp"

using namespace grassbin;
using namespace testing_support;

namespace {
const Matrix kHand{{0.5, 0.2}, {-0.2, 0.5}};

Matrix random_matrix(std::size_t n, std::mt19937_64& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}

Matrix well_conditioned(std::size_t n, std::mt19937_64& rng) {
  Matrix m = random_matrix(n, rng);
  for (std::size_t i = 0; i < n; ++i) m(i, i) += static_cast<double>(n);
  return m;
}
}  // namespace

TEST_CASE("determinant: hand values and conventions") {
  CHECK(determinant(Matrix{}) == 1.0);
  CHECK(determinant(Matrix::identity(5)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(determinant(kHand) == doctest::Approx(0.29).epsilon(1e-14));
  const Matrix m{{2, -1, 0}, {-1, 2, -1}, {0, -1, 2}};
  CHECK(determinant(m) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(determinant(Matrix{{1, 2}, {2, 4}}) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("determinant agrees with cofactor expansion") {
  std::mt19937_64 rng(11);
  for (std::size_t n = 1; n <= 7; ++n) {
    const Matrix m = random_matrix(n, rng);
    CHECK(determinant(m) == doctest::Approx(cofactor_det(m)).epsilon(1e-10));
  }
}

TEST_CASE("inverse") {
  CHECK(inverse(Matrix{{0.5}})(0, 0) == doctest::Approx(2.0));
  const std::vector<double> d{0.5, 0.25};
  const Matrix di = inverse(Matrix::diagonal(d));
  CHECK(di(0, 0) == doctest::Approx(2.0));
  CHECK(di(1, 1) == doctest::Approx(4.0));
  CHECK(di(0, 1) == 0.0);

  const Matrix hi = inverse(kHand);
  const Matrix expect = (1.0 / 0.29) * Matrix{{0.5, -0.2}, {0.2, 0.5}};
  CHECK(max_abs_diff(hi, expect) < 1e-14);

  CHECK(inverse(Matrix{}).rows() == 0);
  CHECK_THROWS_AS(inverse(Matrix{{1, 2}, {2, 4}}), Error);
  try {
    inverse(Matrix{{1, 2}, {2, 4}});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingularMatrix);
  }

  std::mt19937_64 rng(5);
  for (std::size_t n = 1; n <= 12; ++n) {
    const Matrix m = well_conditioned(n, rng);
    CHECK(max_abs_diff(m * inverse(m), Matrix::identity(n)) < 1e-10);
    CHECK(determinant(inverse(m)) * determinant(m) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("singularity tolerance is scale invariant") {
  const Matrix tiny = 1e-20 * Matrix{{1, 2}, {3, 4}};
  CHECK_FALSE(LuDecomposition(tiny).singular());
  CHECK(determinant(tiny) == doctest::Approx(-2e-40).epsilon(1e-10));
  const Matrix nearly{{1, 1}, {1, 1 + 1e-14}};
  CHECK(LuDecomposition(nearly).singular());
}

TEST_CASE("principal submatrix") {
  const Matrix m{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  CHECK(principal_submatrix(m, IndexSet::all(3)) == m);
  CHECK(principal_submatrix(m, IndexSet{}).rows() == 0);
  CHECK(principal_submatrix(m, IndexSet{0, 2}) == Matrix{{1, 3}, {7, 9}});
  CHECK_THROWS_AS(principal_submatrix(m, IndexSet{0, 3}), Error);
  std::mt19937_64 rng(3);
  const Matrix r = random_matrix(6, rng);
  CHECK(determinant(principal_submatrix(r, IndexSet::all(6))) == determinant(r));
}

TEST_CASE("index sets") {
  CHECK_THROWS_AS(IndexSet({2, 1}), Error);
  CHECK_THROWS_AS(IndexSet({1, 1}), Error);
  const IndexSet s{0, 2, 5};
  CHECK(s.mask() == 0b100101u);
  CHECK(IndexSet::from_mask(0b100101u) == s);
  CHECK(s.complement(6) == IndexSet{1, 3, 4});
  CHECK(IndexSet::from_unsorted({5, 0, 2, 2}) == s);
  CHECK_THROWS_AS(s.check_within(5), Error);
}

TEST_CASE("schur complement") {
  const Matrix s = schur_complement(kHand, IndexSet{0}, IndexSet{1});
  REQUIRE(s.rows() == 1);
  CHECK(s(0, 0) == doctest::Approx(0.58).epsilon(1e-14));

  const Matrix block{{2, 1, 0, 0}, {1, 3, 0, 0}, {0, 0, 4, 1}, {0, 0, 2, 5}};
  CHECK(max_abs_diff(schur_complement(block, IndexSet{0, 1}, IndexSet{2, 3}),
                     Matrix{{2, 1}, {1, 3}}) < 1e-15);

  try {
    schur_complement(Matrix{{1, 1, 2}, {1, 0, 0}, {2, 0, 0}}, IndexSet{0}, IndexSet{1, 2});
    FAIL("expected SingularBlock");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingularBlock);
  }

  std::mt19937_64 rng(17);
  for (std::size_t n = 2; n <= 10; ++n) {
    const Matrix m = well_conditioned(n, rng);
    const IndexSet elim = IndexSet::from_mask(rng() % ((1u << n) - 1) + 1).complement(n);
    const IndexSet keep = elim.complement(n);
    if (keep.empty() || elim.empty()) continue;
    const double lhs = determinant(m);
    const double rhs = determinant(principal_submatrix(m, elim)) * determinant(schur_complement(m, keep, elim));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("schur complement of Lambda inverts the Sigma block") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const Matrix sigma = random_valid_sigma(5, rng);
    const Matrix lambda = inverse(sigma);
    const IndexSet r = IndexSet::from_mask(1 + rng() % 30);
    const IndexSet m = r.complement(5);
    const Matrix lhs = schur_complement(lambda, r, m);
    CHECK(max_abs_diff(lhs, inverse(principal_submatrix(sigma, r))) < 1e-9);
  }
}

TEST_CASE("subset enumeration order") {
  std::vector<std::vector<std::size_t>> seen;
  for_each_subset_ordered(3, [&](const IndexSet& s) {
    seen.push_back(s.indices());
    return true;
  });
  const std::vector<std::vector<std::size_t>> expect{{},     {0},    {1},    {2},      {0, 1},
                                                     {0, 2}, {1, 2}, {0, 1, 2}};
  CHECK(seen == expect);
}

TEST_CASE("sum of principal minors") {
  CHECK(sum_principal_minors(Matrix{{1.0}}) == doctest::Approx(2.0));
  CHECK(sum_principal_minors(Matrix(3, 3)) == 1.0);
  CHECK(sum_principal_minors(Matrix{}) == 1.0);
  CHECK_THROWS_AS(sum_principal_minors(Matrix(4, 4), 3), Error);

  std::mt19937_64 rng(29);
  for (std::size_t p = 1; p <= 12; ++p) {
    const Matrix m = random_matrix(p, rng);
    const double s = sum_principal_minors(m - Matrix::identity(p));
    CHECK(s == doctest::Approx(determinant(m)).epsilon(1e-9).scale(1.0));
  }
  const Matrix lambda = random_valid_lambda(5, rng);
  CHECK(sum_principal_minors(lambda - Matrix::identity(5)) ==
        doctest::Approx(determinant(lambda)).epsilon(1e-12));
}

TEST_CASE("P0 test") {
  CHECK(is_p0_matrix(Matrix::identity(4)).is_p0);
  const P0Result neg = is_p0_matrix(Matrix{{-1.0}});
  CHECK_FALSE(neg.is_p0);
  REQUIRE(neg.witness);
  CHECK(*neg.witness == IndexSet{0});

  // All 1x1 minors nonnegative, the 2x2 one is not.
  const P0Result r = is_p0_matrix(Matrix{{0.1, 0, 1}, {0, 1, 0}, {1, 0, 0.1}});
  CHECK_FALSE(r.is_p0);
  CHECK(*r.witness == IndexSet{0, 2});
  CHECK(r.witness_minor == doctest::Approx(0.01 - 1.0));
  CHECK_THROWS_AS(is_p0_matrix(Matrix(5, 5), 1e-10, 4), Error);
}

TEST_CASE("P0 test agrees with naive enumeration") {
  std::mt19937_64 rng(31);
  int valid = 0, invalid = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t p = 1 + rng() % 8;
    Matrix m(p, p);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) m(i, j) = uniform(rng, i == j ? -0.2 : -0.7, i == j ? 2.0 : 0.7);
    bool naive = true;
    std::optional<std::uint64_t> first;
    for (std::size_t k = 1; k <= p && naive; ++k) {
      for (std::uint64_t mask = 1; mask < (1u << p); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcountll(mask)) != k) continue;
        const IndexSet s = IndexSet::from_mask(mask);
        if (cofactor_det(principal_submatrix(m, s)) < -1e-10) {
          naive = false;
          if (!first) first = mask;
        }
      }
    }
    const P0Result r = is_p0_matrix(m);
    CHECK(r.is_p0 == naive);
    if (!naive) {
      ++invalid;
      REQUIRE(r.witness);
      CHECK(r.witness->size() == static_cast<std::size_t>(__builtin_popcountll(*first)));
    } else {
      ++valid;
    }
  }
  CHECK(valid > 20);
  CHECK(invalid > 20);
}
