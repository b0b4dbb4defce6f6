#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "grassbin/matrix.hpp"

namespace grassbin {

// Joint state of p binary variables: bit i holds x_{i+1}.
using State = std::uint64_t;
using BinaryVector = std::vector<std::uint8_t>;

State state_of(std::span<const std::uint8_t> bits);
BinaryVector bits_of(State state, std::size_t p);

// Partial assignment of variables (0-based index -> 0/1).
class Observation {
 public:
  Observation() = default;
  Observation(std::initializer_list<std::pair<const std::size_t, int>> values);
  explicit Observation(std::map<std::size_t, int> values);

  void set(std::size_t index, int bit);
  const std::map<std::size_t, int>& assignments() const noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }
  bool observes(std::size_t i) const noexcept { return values_.count(i) != 0; }

  IndexSet ones() const;       // A
  IndexSet zeros() const;      // B
  IndexSet observed() const;   // C = A u B
  IndexSet remaining(std::size_t p) const;  // R = P \ C
  void check_within(std::size_t p) const;

 private:
  std::map<std::size_t, int> values_;
};

enum class Validity { Unchecked, Valid, Invalid };

struct ValidityReport {
  Validity status = Validity::Unchecked;
  std::optional<IndexSet> witness;  // first B with det(Lambda[B] - I) < -tol
  // Smallest joint probability seen during the check (all states when Valid).
  double min_probability = 0.0;
  // Valid, but some state has probability within tolerance of zero.
  bool has_zero_states = false;
};

enum class CheckMode { Auto, Always, Never };

struct BuildOptions {
  CheckMode check = CheckMode::Auto;
  bool strict = false;  // throw InvalidModel instead of recording it
  std::size_t auto_check_limit = 12;
  std::size_t max_p = kDefaultEnumerationCap;
};

inline constexpr double kProbabilityTolerance = 1e-10;

class GrassmannBinary;

struct ConditionalResult;

// Distribution over p binary variables parameterized by the p x p matrix
// Sigma (diagonal = marginal means) with Lambda = Sigma^-1. A joint state with
// zero-set B has probability det(Lambda[B] - I) / det(Lambda).
class GrassmannBinary {
 public:
  static GrassmannBinary from_sigma(const Matrix& sigma, const BuildOptions& options = {});
  static GrassmannBinary from_lambda(const Matrix& lambda, const BuildOptions& options = {});

  std::size_t dim() const noexcept { return sigma_.rows(); }
  const Matrix& sigma() const noexcept { return sigma_; }
  const Matrix& lambda() const noexcept { return lambda_; }
  double det_lambda() const noexcept { return det_lambda_; }
  double log_abs_det_lambda() const noexcept;
  const ValidityReport& validity() const noexcept { return validity_; }
  bool valid() const noexcept { return validity_.status == Validity::Valid; }
  const BuildOptions& options() const noexcept { return options_; }

  // Signed; an invalid model may return negative values.
  double joint_prob(std::span<const std::uint8_t> x) const;
  double joint_prob(State state) const;
  // Indexed by State; requires p <= options().max_p.
  std::vector<double> joint_table() const;

  GrassmannBinary marginal(const IndexSet& keep) const;
  ConditionalResult conditional(const Observation& obs) const;
  GrassmannBinary flip_coding(const IndexSet& flip) const;

  double mean(std::size_t i) const;
  double covariance(std::size_t i, std::size_t j) const;
  double pearson(std::size_t i, std::size_t j) const;
  // E[prod_{i in r} (x_i - mu_i)] = det(Sigma[r] - diag(mu_r)).
  double central_moment(const IndexSet& r) const;
  // E[(x_i - mu_i)^2 (x_j - mu_j)^2], i != j.
  double fourth_central_moment(std::size_t i, std::size_t j) const;
  // Correlation of (x_i, x_j) given `obs` with every other unobserved
  // variable fixed to 1, read off the recoded precision matrix.
  double partial_correlation(std::size_t i, std::size_t j, const Observation& obs) const;
  // Nats.
  double entropy() const;

 private:
  GrassmannBinary(Matrix sigma, Matrix lambda, const BuildOptions& options);
  static GrassmannBinary derived(Matrix sigma, const BuildOptions& options);
  void check_index(std::size_t i) const;

  Matrix sigma_;
  Matrix lambda_;
  double det_lambda_ = 1.0;
  ValidityReport validity_;
  BuildOptions options_;
};

struct ConditionalResult {
  GrassmannBinary model;  // over `remaining`, in increasing index order
  IndexSet remaining;
  double evidence = 0.0;  // p(x_C)
};

// Sigma with the coding of `flip` inverted: for j in flip, Sigma_jj -> 1 - Sigma_jj
// and column j (off the diagonal) negated.
Matrix flipped_sigma(const Matrix& sigma, const IndexSet& flip);

double binary_entropy(double mu);

}  // namespace grassbin
