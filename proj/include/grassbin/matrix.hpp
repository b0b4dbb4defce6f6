#pragma once

// Dense linear algebra for desk-scale square matrices (p up to ~20).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace grassbin {

inline constexpr std::size_t kDefaultEnumerationCap = 20;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }
  double max_abs() const noexcept;
  bool all_finite() const noexcept;

  Matrix transposed() const;

  friend Matrix operator+(const Matrix& a, const Matrix& b);
  friend Matrix operator-(const Matrix& a, const Matrix& b);
  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator*(double s, const Matrix& a);
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double max_abs_diff(const Matrix& a, const Matrix& b);

// Strictly increasing set of 0-based indices.
class IndexSet {
 public:
  IndexSet() = default;
  // Throws IndexOutOfRange unless `indices` is strictly increasing.
  explicit IndexSet(std::vector<std::size_t> indices);
  IndexSet(std::initializer_list<std::size_t> indices)
      : IndexSet(std::vector<std::size_t>(indices)) {}

  static IndexSet all(std::size_t p);
  static IndexSet from_mask(std::uint64_t mask);
  // Sorts and deduplicates; no range check.
  static IndexSet from_unsorted(std::vector<std::size_t> indices);

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  std::size_t operator[](std::size_t k) const { return idx_[k]; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }
  const std::vector<std::size_t>& indices() const noexcept { return idx_; }

  bool contains(std::size_t i) const noexcept;
  std::uint64_t mask() const noexcept;
  IndexSet complement(std::size_t p) const;
  // Throws IndexOutOfRange when some element is >= p.
  void check_within(std::size_t p) const;

  friend bool operator==(const IndexSet&, const IndexSet&) = default;

 private:
  std::vector<std::size_t> idx_;
};

// LU factorization with partial pivoting. A pivot counts as singular when
// |pivot| < 1e-12 * max_abs(input).
class LuDecomposition {
 public:
  explicit LuDecomposition(const Matrix& m, double relative_tolerance = 1e-12);

  bool singular() const noexcept { return singular_; }
  double determinant() const noexcept;
  std::vector<double> solve(std::span<const double> rhs) const;
  Matrix solve(const Matrix& rhs) const;
  Matrix inverse() const;

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
  bool singular_ = false;
  bool exact_zero_ = false;
};

double determinant(const Matrix& m);
Matrix inverse(const Matrix& m);

Matrix principal_submatrix(const Matrix& m, const IndexSet& s);
Matrix submatrix(const Matrix& m, const IndexSet& rows, const IndexSet& cols);

// m[keep] - m[keep, eliminate] * m[eliminate]^-1 * m[eliminate, keep]
Matrix schur_complement(const Matrix& m, const IndexSet& keep, const IndexSet& eliminate);

// Visits every subset of {0..p-1}: increasing cardinality, lexicographic
// within a cardinality, starting with the empty set. Stops early when the
// visitor returns false.
template <class Visitor>
void for_each_subset_ordered(std::size_t p, Visitor&& visit);

double sum_principal_minors(const Matrix& m, std::size_t cap = kDefaultEnumerationCap);

struct P0Result {
  bool is_p0 = true;
  std::optional<IndexSet> witness;  // first violating subset
  double witness_minor = 0.0;
  double min_minor = 1.0;
};

// Every principal minor >= -tolerance.
P0Result is_p0_matrix(const Matrix& m, double tolerance = 1e-10,
                      std::size_t cap = kDefaultEnumerationCap);

void check_enumeration_cap(std::size_t p, std::size_t cap);

template <class Visitor>
void for_each_subset_ordered(std::size_t p, Visitor&& visit) {
  std::vector<std::size_t> comb;
  if (!visit(IndexSet{})) return;
  for (std::size_t k = 1; k <= p; ++k) {
    comb.resize(k);
    for (std::size_t i = 0; i < k; ++i) comb[i] = i;
    while (true) {
      if (!visit(IndexSet(comb))) return;
      std::size_t i = k;
      while (i > 0 && comb[i - 1] == p - k + (i - 1)) --i;
      if (i == 0) break;
      ++comb[i - 1];
      for (std::size_t j = i; j < k; ++j) comb[j] = comb[j - 1] + 1;
    }
  }
}

}  // namespace grassbin
