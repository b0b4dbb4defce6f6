#pragma once

// Shared helpers for the test binaries: random model generators and a few
// reference computations written independently of the library kernel.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "grassbin/matrix.hpp"
#include "grassbin/model.hpp"

namespace testing_support {

using grassbin::Matrix;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Lambda = I + S + K with S symmetric positive definite and K skew, so that
// Lambda - I has a positive definite symmetric part and is a P-matrix.
inline Matrix random_valid_lambda(std::size_t p, std::mt19937_64& rng, double spread = 1.0) {
  Matrix a(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) a(i, j) = uniform(rng, -spread, spread);
  Matrix s = a.transposed() * a;
  for (std::size_t i = 0; i < p; ++i) s(i, i) += uniform(rng, 0.1, 1.0);
  Matrix k(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      k(i, j) = uniform(rng, -spread, spread);
      k(j, i) = -k(i, j);
    }
  return Matrix::identity(p) + s + k;
}

inline Matrix random_valid_sigma(std::size_t p, std::mt19937_64& rng, double spread = 1.0) {
  return grassbin::inverse(random_valid_lambda(p, rng, spread));
}

// Means inside (0.1, 0.9) with off-diagonals large enough that a good share
// of draws are invalid.
inline Matrix random_sigma(std::size_t p, std::mt19937_64& rng, double off = 0.6) {
  Matrix s(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) s(i, j) = i == j ? uniform(rng, 0.1, 0.9) : uniform(rng, -off, off);
  return s;
}

// Determinant by cofactor expansion along the first row.
inline double cofactor_det(const Matrix& m) {
  const std::size_t n = m.rows();
  if (n == 0) return 1.0;
  if (n == 1) return m(0, 0);
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Matrix minor(n - 1, n - 1);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0, jj = 0; j < n; ++j) {
        if (j == c) continue;
        minor(i - 1, jj++) = m(i, j);
      }
    acc += ((c % 2) ? -1.0 : 1.0) * m(0, c) * cofactor_det(minor);
  }
  return acc;
}

// Joint probability from det(Lambda[B] - I) / det(Lambda), by cofactor expansion.
inline double naive_joint(const Matrix& sigma, grassbin::State s) {
  const std::size_t p = sigma.rows();
  const Matrix lambda = grassbin::inverse(sigma);
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < p; ++i)
    if (!((s >> i) & 1u)) zeros.push_back(i);
  Matrix b(zeros.size(), zeros.size());
  for (std::size_t a = 0; a < zeros.size(); ++a)
    for (std::size_t c = 0; c < zeros.size(); ++c)
      b(a, c) = lambda(zeros[a], zeros[c]) - (a == c ? 1.0 : 0.0);
  return cofactor_det(b) / cofactor_det(lambda);
}

inline Matrix gauge_scale(const Matrix& sigma, std::size_t i, double c) {
  Matrix out = sigma;
  for (std::size_t j = 0; j < sigma.rows(); ++j) {
    out(i, j) *= c;
    out(j, i) /= c;
  }
  return out;
}

inline grassbin::GrassmannBinary unchecked(const Matrix& sigma) {
  grassbin::BuildOptions o;
  o.check = grassbin::CheckMode::Never;
  return grassbin::GrassmannBinary::from_sigma(sigma, o);
}

inline double max_table_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return a.size() == b.size() ? d : INFINITY;
}

}  // namespace testing_support
