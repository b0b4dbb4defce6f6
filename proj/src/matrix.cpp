#include "grassbin/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "grassbin/error.hpp"

namespace grassbin {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::SingularBlock: return "SingularBlock";
    case Errc::SingularSigma: return "SingularSigma";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DimensionTooLarge: return "DimensionTooLarge";
    case Errc::EmptyIndexSet: return "EmptyIndexSet";
    case Errc::MeanOutOfRange: return "MeanOutOfRange";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::ZeroEvidence: return "ZeroEvidence";
    case Errc::SameIndex: return "SameIndex";
    case Errc::ObservedIndex: return "ObservedIndex";
    case Errc::InvalidConditionalMean: return "InvalidConditionalMean";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::InfeasibleTarget: return "InfeasibleTarget";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::NonPositiveProbability: return "NonPositiveProbability";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(Errc::DimensionMismatch, "ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

double Matrix::max_abs() const noexcept {
  double best = 0.0;
  for (double v : data_) best = std::max(best, std::abs(v));
  return best;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::DimensionMismatch, "matrix shapes differ");
  }
}
}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b);
  Matrix r = a;
  for (std::size_t k = 0; k < r.data_.size(); ++k) r.data_[k] += b.data_[k];
  return r;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b);
  Matrix r = a;
  for (std::size_t k = 0; k < r.data_.size(); ++k) r.data_[k] -= b.data_[k];
  return r;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) throw Error(Errc::DimensionMismatch, "inner dimensions differ");
  Matrix r(a.rows_, b.cols_);
  for (std::size_t i = 0; i < a.rows_; ++i)
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols_; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix r = a;
  for (double& v : r.data_) v *= s;
  return r;
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).max_abs(); }

// ---------------------------------------------------------------------------

IndexSet::IndexSet(std::vector<std::size_t> indices) : idx_(std::move(indices)) {
  for (std::size_t k = 1; k < idx_.size(); ++k) {
    if (idx_[k] <= idx_[k - 1]) {
      throw Error(Errc::IndexOutOfRange, "index set must be strictly increasing");
    }
  }
}

IndexSet IndexSet::all(std::size_t p) {
  std::vector<std::size_t> v(p);
  for (std::size_t i = 0; i < p; ++i) v[i] = i;
  return IndexSet(std::move(v));
}

IndexSet IndexSet::from_mask(std::uint64_t mask) {
  std::vector<std::size_t> v;
  for (std::size_t i = 0; mask != 0; ++i, mask >>= 1)
    if (mask & 1u) v.push_back(i);
  return IndexSet(std::move(v));
}

IndexSet IndexSet::from_unsorted(std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return IndexSet(std::move(indices));
}

bool IndexSet::contains(std::size_t i) const noexcept {
  return std::binary_search(idx_.begin(), idx_.end(), i);
}

std::uint64_t IndexSet::mask() const noexcept {
  std::uint64_t m = 0;
  for (std::size_t i : idx_) m |= std::uint64_t{1} << i;
  return m;
}

IndexSet IndexSet::complement(std::size_t p) const {
  std::vector<std::size_t> v;
  for (std::size_t i = 0; i < p; ++i)
    if (!contains(i)) v.push_back(i);
  return IndexSet(std::move(v));
}

void IndexSet::check_within(std::size_t p) const {
  if (!idx_.empty() && idx_.back() >= p) {
    throw Error(Errc::IndexOutOfRange,
                "index " + std::to_string(idx_.back() + 1) + " exceeds dimension " +
                    std::to_string(p),
                {idx_.back()});
  }
}

// ---------------------------------------------------------------------------

LuDecomposition::LuDecomposition(const Matrix& m, double relative_tolerance) : lu_(m) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "LU needs a square matrix");
  const std::size_t n = m.rows();
  perm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
  const double threshold = relative_tolerance * m.max_abs();
  if (n > 0 && threshold == 0.0) singular_ = true;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu_(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu_(i, k)) > best) {
        best = std::abs(lu_(i, k));
        piv = i;
      }
    }
    if (best < threshold || best == 0.0) singular_ = true;
    if (best == 0.0) {
      exact_zero_ = true;
      continue;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
      std::swap(perm_[k], perm_[piv]);
      sign_ = -sign_;
    }
    const double inv_pivot = 1.0 / lu_(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu_(i, k) * inv_pivot;
      lu_(i, k) = f;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
    }
  }
}

double LuDecomposition::determinant() const noexcept {
  if (exact_zero_) return 0.0;
  double d = sign_;
  for (std::size_t i = 0; i < lu_.rows(); ++i) d *= lu_(i, i);
  return d;
}

std::vector<double> LuDecomposition::solve(std::span<const double> rhs) const {
  const std::size_t n = lu_.rows();
  if (rhs.size() != n) throw Error(Errc::DimensionMismatch, "rhs length differs");
  if (singular_) throw Error(Errc::SingularMatrix, "pivot below singularity tolerance");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = rhs[perm_[i]];
    for (std::size_t j = 0; j < i; ++j) v -= lu_(i, j) * x[j];
    x[i] = v;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = x[ii];
    for (std::size_t j = ii + 1; j < n; ++j) v -= lu_(ii, j) * x[j];
    x[ii] = v / lu_(ii, ii);
  }
  return x;
}

Matrix LuDecomposition::solve(const Matrix& rhs) const {
  const std::size_t n = lu_.rows();
  if (rhs.rows() != n) throw Error(Errc::DimensionMismatch, "rhs rows differ");
  Matrix out(n, rhs.cols());
  std::vector<double> col(n);
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rhs(i, c);
    const auto x = solve(col);
    for (std::size_t i = 0; i < n; ++i) out(i, c) = x[i];
  }
  return out;
}

Matrix LuDecomposition::inverse() const { return solve(Matrix::identity(lu_.rows())); }

double determinant(const Matrix& m) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "determinant of non-square matrix");
  const std::size_t n = m.rows();
  // Closed forms for the sizes that dominate minor enumeration.
  if (n == 0) return 1.0;
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return LuDecomposition(m).determinant();
}

Matrix inverse(const Matrix& m) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "inverse of non-square matrix");
  return LuDecomposition(m).inverse();
}

Matrix submatrix(const Matrix& m, const IndexSet& rows, const IndexSet& cols) {
  rows.check_within(m.rows());
  cols.check_within(m.cols());
  Matrix r(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) r(a, b) = m(rows[a], cols[b]);
  return r;
}

Matrix principal_submatrix(const Matrix& m, const IndexSet& s) { return submatrix(m, s, s); }

Matrix schur_complement(const Matrix& m, const IndexSet& keep, const IndexSet& eliminate) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "Schur complement of non-square matrix");
  for (std::size_t i : keep) {
    if (eliminate.contains(i)) {
      throw Error(Errc::IndexOutOfRange, "keep and eliminate overlap", {i});
    }
  }
  Matrix result = principal_submatrix(m, keep);
  if (eliminate.empty()) return result;
  const LuDecomposition lu(principal_submatrix(m, eliminate));
  if (lu.singular()) throw Error(Errc::SingularBlock, "eliminated block is singular");
  const Matrix correction = submatrix(m, keep, eliminate) * lu.solve(submatrix(m, eliminate, keep));
  return result - correction;
}

void check_enumeration_cap(std::size_t p, std::size_t cap) {
  if (p > cap || p > 62) {
    throw Error(Errc::DimensionTooLarge,
                "dimension " + std::to_string(p) + " exceeds enumeration cap " + std::to_string(cap));
  }
}

double sum_principal_minors(const Matrix& m, std::size_t cap) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "principal minors of non-square matrix");
  check_enumeration_cap(m.rows(), cap);
  double total = 0.0;
  for_each_subset_ordered(m.rows(), [&](const IndexSet& s) {
    total += determinant(principal_submatrix(m, s));
    return true;
  });
  return total;
}

P0Result is_p0_matrix(const Matrix& m, double tolerance, std::size_t cap) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, "P0 test of non-square matrix");
  check_enumeration_cap(m.rows(), cap);
  P0Result result;
  for_each_subset_ordered(m.rows(), [&](const IndexSet& s) {
    const double minor = determinant(principal_submatrix(m, s));
    result.min_minor = std::min(result.min_minor, minor);
    if (minor < -tolerance) {
      result.is_p0 = false;
      result.witness = s;
      result.witness_minor = minor;
      return false;
    }
    return true;
  });
  return result;
}

}  // namespace grassbin
