#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grassbin/matrix.hpp"
#include "grassbin/model.hpp"
#include "grassbin/sampler.hpp"

namespace grassbin {

// ---------------------------------------------------------------------------
// Sample statistics

struct StatSummary {
  std::size_t n = 0;
  std::vector<double> means;
  // Unbiased (1/(N-1)) sample covariances; NaN when N < 2.
  Matrix covariances;
  // q_delta = n_delta / N, indexed by State.
  std::vector<double> empirical;
};

StatSummary summarize(const Dataset& data, std::size_t cap = kDefaultEnumerationCap);

// Expectation and variance of the sample statistics over datasets of size N
// drawn from `model`.
struct StatMoments {
  std::size_t n = 0;
  std::vector<double> mean_xbar, var_xbar;
  Matrix mean_s, var_s;  // off-diagonal entries only
  std::vector<double> mean_q, var_q;
};

StatMoments theoretical_stat_moments(const GrassmannBinary& model, std::size_t n);

// ---------------------------------------------------------------------------
// Maximum-entropy parameterization

struct MomentTarget {
  std::vector<double> means;
  Matrix covariances;  // symmetric; diagonal ignored

  static MomentTarget from_correlations(std::vector<double> means, const Matrix& rho);
  std::size_t dim() const noexcept { return means.size(); }
  double correlation(std::size_t i, std::size_t j) const;
  void validate() const;
};

// Pairs (i, j), 1 <= i < j (0-based), whose split of the covariance between
// Sigma_ij and Sigma_ji is free once Sigma_i0 = -1 is pinned.
std::vector<std::pair<std::size_t, std::size_t>> free_ratio_pairs(std::size_t p);

// Sigma reproducing the target moments: diagonal = means, Sigma_i0 = -1,
// Sigma_0j = sigma_0j and, for each free pair, Sigma_ij = s e^r sqrt|sigma_ij|
// with the partner entry chosen so that -Sigma_ij Sigma_ji = sigma_ij.
Matrix same_moment_sigma(const MomentTarget& target, std::span<const double> ratios,
                         std::span<const int> signs);

struct MaxEntropyOptions {
  double ratio_range = 6.0;   // grid over r in [-range, range]
  double grid_step = 0.25;
  std::size_t max_sweeps = 200;
  double tolerance = 1e-12;
  // Also search the sign of each free pair when there are at most this many.
  std::size_t sign_search_limit = 8;
  std::size_t max_p = kDefaultEnumerationCap;
};

struct MaxEntropyFit {
  Matrix sigma;
  std::vector<double> ratios;
  std::vector<int> signs;
  double entropy = 0.0;
  std::size_t sweeps = 0;
};

MaxEntropyFit maximize_entropy(const MomentTarget& target, const MaxEntropyOptions& options = {});
GrassmannBinary fit_max_entropy(const MomentTarget& target, const MaxEntropyOptions& options = {});

// ---------------------------------------------------------------------------
// MAP estimation

// Pseudo-count weighted log likelihood sum_delta (n_delta + gamma) log pi_delta,
// with the Dirichlet normalizer dropped. `counts` is indexed by State.
double log_posterior(const Matrix& sigma, std::span<const double> counts, double gamma);
std::vector<double> state_counts(const Dataset& data, std::size_t cap = kDefaultEnumerationCap);

enum class InitMode { MomentMatching, Independent };

struct FitConfig {
  double gamma = 0.01;
  std::size_t max_newton_iters = 100;
  double gradient_tolerance = 1e-8;  // on the per-observation objective
  std::size_t step_halving_limit = 40;
  InitMode init = InitMode::MomentMatching;
  // Moment matching: every sign pattern of the free-pair splits is scored
  // by its starting objective (all 2^k patterns up to sign_search_limit
  // pairs) and Newton runs from the best `moment_starts` of them.
  std::size_t moment_starts = 8;
  std::size_t sign_search_limit = 8;
  std::optional<Matrix> initial_sigma;
  // Also start from the independent model and from the transposed first
  // start. The best run is kept either way.
  bool multistart = false;
  std::size_t max_p = kDefaultEnumerationCap;

  void validate() const;
};

struct FitReport {
  Matrix sigma;  // Sigma_i1 = -1 for i != 1
  std::vector<double> log_posterior_trace;
  double log_posterior = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // max-norm, per-observation objective
  std::size_t hessian_fallbacks = 0;
  std::string start;
  // Largest joint-table difference between the kept run and the other
  // converged runs, when more than one start was used.
  std::optional<double> multistart_spread;
};

FitReport fit_map(const Dataset& data, const FitConfig& config = {});
FitReport fit_map_counts(std::size_t p, std::span<const double> counts,
                         const FitConfig& config = {});

// Row/column rescaling so that Sigma_i1 = -1 for i != 1. Rows whose
// first-column entry is zero cannot be rescaled there and are left as is.
Matrix canonicalize_gauge(const Matrix& sigma);

// Free parameters of the gauge-fixed layout: logit of each diagonal entry,
// then every off-diagonal entry except the pinned first column, row-major.
class GaugeLayout {
 public:
  explicit GaugeLayout(std::size_t p);

  std::size_t dim() const noexcept { return p_; }
  std::size_t size() const noexcept { return p_ + entries_.size(); }
  // (row, col) of parameter k; diagonal for k < p.
  std::pair<std::size_t, std::size_t> entry(std::size_t k) const;
  std::optional<std::size_t> index_of(std::size_t row, std::size_t col) const;

  std::vector<double> pack(const Matrix& sigma) const;
  Matrix unpack(std::span<const double> theta) const;

 private:
  std::size_t p_;
  std::vector<std::pair<std::size_t, std::size_t>> entries_;
};

// Large-sample variances of the MAP estimates at `truth` for sample size n,
// from the inverse Fisher information of the gauge-fixed parameters and the
// delta method.
struct AsymptoticVariances {
  std::vector<double> mean;       // mu_i
  Matrix sigma_entries;           // Sigma_ij (0 for pinned entries)
  Matrix covariance;              // sigma_ij = -Sigma_ij Sigma_ji
  std::vector<double> probability;  // pi_delta
};

AsymptoticVariances map_asymptotic_variances(const Matrix& truth, std::size_t n);

}  // namespace grassbin
