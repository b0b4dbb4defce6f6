#include "grassbin/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "grassbin/error.hpp"

namespace grassbin {

State state_of(std::span<const std::uint8_t> bits) {
  if (bits.size() > 63) throw Error(Errc::DimensionTooLarge, "state needs more than 63 bits");
  State s = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw Error(Errc::ParseError, "binary vector entries must be 0 or 1", {i});
    if (bits[i]) s |= State{1} << i;
  }
  return s;
}

BinaryVector bits_of(State state, std::size_t p) {
  BinaryVector v(p);
  for (std::size_t i = 0; i < p; ++i) v[i] = static_cast<std::uint8_t>((state >> i) & 1u);
  return v;
}

// ---------------------------------------------------------------------------

Observation::Observation(std::initializer_list<std::pair<const std::size_t, int>> values) {
  for (const auto& [i, bit] : values) set(i, bit);
}

Observation::Observation(std::map<std::size_t, int> values) {
  for (const auto& [i, bit] : values) set(i, bit);
}

void Observation::set(std::size_t index, int bit) {
  if (bit != 0 && bit != 1) throw Error(Errc::ParseError, "observed value must be 0 or 1", {index});
  values_[index] = bit;
}

IndexSet Observation::ones() const {
  std::vector<std::size_t> v;
  for (const auto& [i, bit] : values_)
    if (bit == 1) v.push_back(i);
  return IndexSet(std::move(v));
}

IndexSet Observation::zeros() const {
  std::vector<std::size_t> v;
  for (const auto& [i, bit] : values_)
    if (bit == 0) v.push_back(i);
  return IndexSet(std::move(v));
}

IndexSet Observation::observed() const {
  std::vector<std::size_t> v;
  for (const auto& kv : values_) v.push_back(kv.first);
  return IndexSet(std::move(v));
}

IndexSet Observation::remaining(std::size_t p) const { return observed().complement(p); }

void Observation::check_within(std::size_t p) const { observed().check_within(p); }

// ---------------------------------------------------------------------------

Matrix flipped_sigma(const Matrix& sigma, const IndexSet& flip) {
  flip.check_within(sigma.rows());
  Matrix out = sigma;
  for (std::size_t j : flip) {
    for (std::size_t i = 0; i < sigma.rows(); ++i) {
      out(i, j) = (i == j) ? 1.0 - sigma(j, j) : -sigma(i, j);
    }
  }
  return out;
}

double binary_entropy(double mu) {
  double h = 0.0;
  if (mu > 0.0) h -= mu * std::log(mu);
  if (mu < 1.0) h -= (1.0 - mu) * std::log(1.0 - mu);
  return h;
}

namespace {

void check_square_finite(const Matrix& m, const char* name) {
  if (!m.square()) throw Error(Errc::DimensionMismatch, std::string(name) + " must be square");
  if (!m.all_finite()) throw Error(Errc::ParseError, std::string(name) + " has non-finite entries");
  if (m.rows() > 62) throw Error(Errc::DimensionTooLarge, "dimension above 62");
}

void check_means(const Matrix& sigma) {
  for (std::size_t i = 0; i < sigma.rows(); ++i) {
    const double mu = sigma(i, i);
    if (!(mu > 0.0 && mu < 1.0)) {
      throw Error(Errc::MeanOutOfRange,
                  "Sigma_" + std::to_string(i + 1) + std::to_string(i + 1) + " = " +
                      std::to_string(mu) + " is not inside (0, 1)",
                  {i});
    }
  }
}

// det(Lambda[B] - I) for the zero-set B of `state`.
double shifted_minor(const Matrix& lambda, State state) {
  const std::size_t p = lambda.rows();
  std::vector<std::size_t> zeros;
  zeros.reserve(p);
  for (std::size_t i = 0; i < p; ++i)
    if (((state >> i) & 1u) == 0) zeros.push_back(i);
  const std::size_t k = zeros.size();
  Matrix block(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      block(a, b) = lambda(zeros[a], zeros[b]) - (a == b ? 1.0 : 0.0);
  return determinant(block);
}

}  // namespace

GrassmannBinary::GrassmannBinary(Matrix sigma, Matrix lambda, const BuildOptions& options)
    : sigma_(std::move(sigma)), lambda_(std::move(lambda)), options_(options) {
  det_lambda_ = determinant(lambda_);
  const std::size_t p = dim();

  const bool run = options_.check == CheckMode::Always ||
                   (options_.check == CheckMode::Auto && p <= options_.auto_check_limit);
  if (!run) return;

  const double minor_tol = kProbabilityTolerance * std::abs(det_lambda_);
  const P0Result r = is_p0_matrix(lambda_ - Matrix::identity(p), minor_tol, options_.max_p);
  validity_.min_probability = det_lambda_ != 0.0 ? r.min_minor / det_lambda_ : r.min_minor;
  if (r.is_p0 && det_lambda_ > 0.0) {
    validity_.status = Validity::Valid;
    validity_.has_zero_states = validity_.min_probability <= kProbabilityTolerance;
    return;
  }
  validity_.status = Validity::Invalid;
  validity_.witness = r.witness;
  if (options_.strict) {
    std::string where = "Lambda - I is not a P0-matrix";
    std::vector<std::size_t> detail;
    if (r.witness) {
      where += "; negative principal minor on {";
      for (std::size_t k = 0; k < r.witness->size(); ++k) {
        where += (k ? "," : "") + std::to_string((*r.witness)[k] + 1);
      }
      where += "}";
      detail = r.witness->indices();
    }
    throw Error(Errc::InvalidModel, where, std::move(detail));
  }
}

GrassmannBinary GrassmannBinary::from_sigma(const Matrix& sigma, const BuildOptions& options) {
  check_square_finite(sigma, "Sigma");
  check_means(sigma);
  const LuDecomposition lu(sigma);
  if (lu.singular()) throw Error(Errc::SingularSigma, "Sigma is singular");
  return GrassmannBinary(sigma, lu.inverse(), options);
}

GrassmannBinary GrassmannBinary::from_lambda(const Matrix& lambda, const BuildOptions& options) {
  check_square_finite(lambda, "Lambda");
  const LuDecomposition lu(lambda);
  if (lu.singular()) throw Error(Errc::SingularSigma, "Lambda is singular");
  Matrix sigma = lu.inverse();
  check_means(sigma);
  return GrassmannBinary(std::move(sigma), lambda, options);
}

// Models produced by marginalizing, conditioning or recoding. Means are not
// range-checked so that invalid parents still yield inspectable children.
GrassmannBinary GrassmannBinary::derived(Matrix sigma, const BuildOptions& options) {
  const LuDecomposition lu(sigma);
  if (lu.singular()) throw Error(Errc::SingularSigma, "derived Sigma is singular");
  Matrix lambda = lu.inverse();
  return GrassmannBinary(std::move(sigma), std::move(lambda), options);
}

double GrassmannBinary::log_abs_det_lambda() const noexcept { return std::log(std::abs(det_lambda_)); }

void GrassmannBinary::check_index(std::size_t i) const {
  if (i >= dim()) {
    throw Error(Errc::IndexOutOfRange,
                "index " + std::to_string(i + 1) + " outside 1.." + std::to_string(dim()), {i});
  }
}

double GrassmannBinary::joint_prob(std::span<const std::uint8_t> x) const {
  if (x.size() != dim()) {
    throw Error(Errc::DimensionMismatch, "state has " + std::to_string(x.size()) +
                                             " entries, model has " + std::to_string(dim()));
  }
  return joint_prob(state_of(x));
}

double GrassmannBinary::joint_prob(State state) const {
  if (dim() < 64 && (state >> dim()) != 0) {
    throw Error(Errc::DimensionMismatch, "state has bits above the model dimension");
  }
  return shifted_minor(lambda_, state) / det_lambda_;
}

std::vector<double> GrassmannBinary::joint_table() const {
  check_enumeration_cap(dim(), options_.max_p);
  const State n = State{1} << dim();
  std::vector<double> table(n);
  for (State s = 0; s < n; ++s) table[s] = shifted_minor(lambda_, s) / det_lambda_;
  return table;
}

GrassmannBinary GrassmannBinary::marginal(const IndexSet& keep) const {
  if (keep.empty()) throw Error(Errc::EmptyIndexSet, "marginal needs at least one variable");
  keep.check_within(dim());
  return derived(principal_submatrix(sigma_, keep), options_);
}

ConditionalResult GrassmannBinary::conditional(const Observation& obs) const {
  obs.check_within(dim());
  const IndexSet observed = obs.observed();
  const IndexSet remaining = obs.remaining(dim());
  const Matrix tilde = flipped_sigma(sigma_, obs.zeros());

  // p(x_C) = det of the recoded observed block.
  const LuDecomposition lu(principal_submatrix(tilde, observed));
  const double evidence = lu.determinant();
  if (lu.singular() || std::abs(evidence) < 1e-12) {
    throw Error(Errc::ZeroEvidence, "observation has zero probability");
  }
  if (remaining.empty()) {
    return {derived(Matrix{}, options_), remaining, evidence};
  }
  Matrix cond = principal_submatrix(sigma_, remaining);
  if (!observed.empty()) {
    cond = cond - submatrix(tilde, remaining, observed) * lu.solve(submatrix(sigma_, observed, remaining));
  }
  try {
    return {derived(std::move(cond), options_), remaining, evidence};
  } catch (const Error& e) {
    if (e.code() == Errc::SingularSigma) {
      throw Error(Errc::SingularBlock, "conditional parameter matrix is singular");
    }
    throw;
  }
}

GrassmannBinary GrassmannBinary::flip_coding(const IndexSet& flip) const {
  return derived(flipped_sigma(sigma_, flip), options_);
}

double GrassmannBinary::mean(std::size_t i) const {
  check_index(i);
  return sigma_(i, i);
}

double GrassmannBinary::covariance(std::size_t i, std::size_t j) const {
  check_index(i);
  check_index(j);
  if (i == j) return sigma_(i, i) * (1.0 - sigma_(i, i));
  return -sigma_(i, j) * sigma_(j, i);
}

double GrassmannBinary::pearson(std::size_t i, std::size_t j) const {
  const double cov = covariance(i, j);
  if (i == j) return 1.0;
  return cov / std::sqrt(covariance(i, i) * covariance(j, j));
}

double GrassmannBinary::central_moment(const IndexSet& r) const {
  if (r.empty()) throw Error(Errc::EmptyIndexSet, "central moment needs at least one variable");
  r.check_within(dim());
  Matrix block = principal_submatrix(sigma_, r);
  for (std::size_t a = 0; a < r.size(); ++a) block(a, a) -= sigma_(r[a], r[a]);
  return determinant(block);
}

double GrassmannBinary::fourth_central_moment(std::size_t i, std::size_t j) const {
  check_index(i);
  check_index(j);
  if (i == j) throw Error(Errc::SameIndex, "fourth central moment needs i != j", {i});
  const double mi = sigma_(i, i);
  const double mj = sigma_(j, j);
  return (1.0 - 2.0 * mi) * (1.0 - 2.0 * mj) * (-sigma_(i, j) * sigma_(j, i)) +
         mi * (1.0 - mi) * mj * (1.0 - mj);
}

double GrassmannBinary::partial_correlation(std::size_t i, std::size_t j,
                                            const Observation& obs) const {
  check_index(i);
  check_index(j);
  obs.check_within(dim());
  if (i == j) throw Error(Errc::SameIndex, "partial correlation needs i != j", {i});
  if (obs.observes(i) || obs.observes(j)) {
    throw Error(Errc::ObservedIndex, "partial correlation of an observed variable",
                {obs.observes(i) ? i : j});
  }
  const LuDecomposition lu(flipped_sigma(sigma_, obs.zeros()));
  if (lu.singular()) throw Error(Errc::SingularSigma, "recoded Sigma is singular");
  const Matrix lt = lu.inverse();
  const double lii = lt(i, i);
  const double ljj = lt(j, j);
  const double det = lii * ljj - lt(i, j) * lt(j, i);
  return -lt(i, j) * lt(j, i) / std::sqrt(ljj * (det - ljj) * lii * (det - lii));
}

double GrassmannBinary::entropy() const {
  const auto table = joint_table();
  double h = 0.0;
  for (State s = 0; s < table.size(); ++s) {
    const double pi = table[s];
    if (pi < -kProbabilityTolerance) {
      throw Error(Errc::InvalidModel, "negative joint probability at state " + std::to_string(s),
                  {static_cast<std::size_t>(s)});
    }
    if (pi >= 1e-300) h -= pi * std::log(pi);
  }
  return h;
}

}  // namespace grassbin
