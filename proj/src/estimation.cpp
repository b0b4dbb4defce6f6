#include "grassbin/estimation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "grassbin/error.hpp"

namespace grassbin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double m) { return std::log(m / (1.0 - m)); }

// Sigma - diag(1 - x): its determinant is (-1)^{#zeros} pi_x.
Matrix shifted_sigma(const Matrix& sigma, State s) {
  Matrix m = sigma;
  for (std::size_t i = 0; i < sigma.rows(); ++i)
    if (((s >> i) & 1u) == 0) m(i, i) -= 1.0;
  return m;
}

double parity_sign(State s, std::size_t p) {
  const int zeros = static_cast<int>(p) - std::popcount(s);
  return (zeros % 2 == 0) ? 1.0 : -1.0;
}

std::vector<double> table_from_sigma(const Matrix& sigma) {
  const std::size_t p = sigma.rows();
  std::vector<double> t(State{1} << p);
  for (State s = 0; s < t.size(); ++s) t[s] = parity_sign(s, p) * determinant(shifted_sigma(sigma, s));
  return t;
}

double entropy_or_neg_inf(const Matrix& sigma) {
  double h = 0.0;
  for (double pi : table_from_sigma(sigma)) {
    if (!(pi > 0.0)) return kNegInf;
    h -= pi * std::log(pi);
  }
  return h;
}

// Cholesky of a symmetric matrix; false when not positive definite.
bool cholesky(const Matrix& a, Matrix& l) {
  const std::size_t n = a.rows();
  l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return true;
}

std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
    y[i] = v / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double v = y[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= l(k, i) * y[k];
    y[i] = v / l(i, i);
  }
  return y;
}

double max_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistics

StatSummary summarize(const Dataset& data, std::size_t cap) {
  const std::size_t n = data.size();
  const std::size_t p = data.dim();
  if (n == 0) throw Error(Errc::TooFewSamples, "empty dataset");
  check_enumeration_cap(p, cap);

  StatSummary out;
  out.n = n;
  out.means.assign(p, 0.0);
  for (State s : data.rows())
    for (std::size_t i = 0; i < p; ++i) out.means[i] += static_cast<double>((s >> i) & 1u);
  for (double& m : out.means) m /= static_cast<double>(n);

  out.covariances = Matrix(p, p, kNaN);
  if (n >= 2) {
    Matrix acc(p, p);
    for (State s : data.rows()) {
      for (std::size_t i = 0; i < p; ++i) {
        const double di = static_cast<double>((s >> i) & 1u) - out.means[i];
        for (std::size_t j = 0; j < p; ++j) {
          acc(i, j) += di * (static_cast<double>((s >> j) & 1u) - out.means[j]);
        }
      }
    }
    out.covariances = (1.0 / static_cast<double>(n - 1)) * acc;
  }

  out.empirical.assign(State{1} << p, 0.0);
  for (const auto& [s, c] : data.counts()) {
    out.empirical[s] = static_cast<double>(c) / static_cast<double>(n);
  }
  return out;
}

StatMoments theoretical_stat_moments(const GrassmannBinary& model, std::size_t n) {
  if (n < 2) throw Error(Errc::TooFewSamples, "sampling moments need N >= 2");
  const std::size_t p = model.dim();
  const double nn = static_cast<double>(n);
  StatMoments out;
  out.n = n;
  for (std::size_t i = 0; i < p; ++i) {
    const double mu = model.mean(i);
    out.mean_xbar.push_back(mu);
    out.var_xbar.push_back(mu * (1.0 - mu) / nn);
  }
  out.mean_s = Matrix(p, p, kNaN);
  out.var_s = Matrix(p, p, kNaN);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (i == j) continue;
      const double sij = model.covariance(i, j);
      out.mean_s(i, j) = sij;
      out.var_s(i, j) = model.fourth_central_moment(i, j) / nn -
                        (nn - 2.0) / (nn * (nn - 1.0)) * sij * sij +
                        model.covariance(i, i) * model.covariance(j, j) / (nn * (nn - 1.0));
    }
  }
  out.mean_q = model.joint_table();
  for (double pi : out.mean_q) out.var_q.push_back(pi * (1.0 - pi) / nn);
  return out;
}

// ---------------------------------------------------------------------------
// Maximum entropy

MomentTarget MomentTarget::from_correlations(std::vector<double> means, const Matrix& rho) {
  const std::size_t p = means.size();
  if (rho.rows() != p || rho.cols() != p) {
    throw Error(Errc::DimensionMismatch, "correlation matrix does not match means");
  }
  MomentTarget t{std::move(means), Matrix(p, p)};
  for (std::size_t i = 0; i < p; ++i) {
    t.covariances(i, i) = t.means[i] * (1.0 - t.means[i]);
    for (std::size_t j = 0; j < p; ++j) {
      if (i == j) continue;
      t.covariances(i, j) = rho(i, j) * std::sqrt(t.covariances(i, i) *
                                                 t.means[j] * (1.0 - t.means[j]));
    }
  }
  t.validate();
  return t;
}

double MomentTarget::correlation(std::size_t i, std::size_t j) const {
  if (i == j) return 1.0;
  return covariances(i, j) /
         std::sqrt(means[i] * (1.0 - means[i]) * means[j] * (1.0 - means[j]));
}

void MomentTarget::validate() const {
  const std::size_t p = means.size();
  if (covariances.rows() != p || covariances.cols() != p) {
    throw Error(Errc::DimensionMismatch, "covariance matrix does not match means");
  }
  for (std::size_t i = 0; i < p; ++i) {
    if (!(means[i] > 0.0 && means[i] < 1.0)) {
      throw Error(Errc::MeanOutOfRange, "target mean outside (0, 1)", {i});
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      if (std::abs(covariances(i, j) - covariances(j, i)) > 1e-12) {
        throw Error(Errc::InfeasibleTarget, "target covariances are not symmetric", {i, j});
      }
      if (std::abs(correlation(i, j)) > 1.0) {
        throw Error(Errc::InfeasibleTarget, "target correlation outside [-1, 1]", {i, j});
      }
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> free_ratio_pairs(std::size_t p) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 1; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) pairs.emplace_back(i, j);
  return pairs;
}

Matrix same_moment_sigma(const MomentTarget& target, std::span<const double> ratios,
                         std::span<const int> signs) {
  const std::size_t p = target.dim();
  const auto pairs = free_ratio_pairs(p);
  if (ratios.size() != pairs.size() || signs.size() != pairs.size()) {
    throw Error(Errc::DimensionMismatch, "one ratio and sign per free pair expected");
  }
  Matrix sigma(p, p);
  for (std::size_t i = 0; i < p; ++i) sigma(i, i) = target.means[i];
  for (std::size_t j = 1; j < p; ++j) {
    sigma(j, 0) = -1.0;
    sigma(0, j) = target.covariances(0, j);
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const double cov = target.covariances(i, j);
    const double mag = std::sqrt(std::abs(cov));
    const double s = signs[k] < 0 ? -1.0 : 1.0;
    sigma(i, j) = s * std::exp(ratios[k]) * mag;
    sigma(j, i) = (cov >= 0.0 ? -s : s) * std::exp(-ratios[k]) * mag;
  }
  return sigma;
}

MaxEntropyFit maximize_entropy(const MomentTarget& target, const MaxEntropyOptions& options) {
  target.validate();
  const std::size_t p = target.dim();
  if (p == 0) throw Error(Errc::EmptyIndexSet, "empty target");
  check_enumeration_cap(p, options.max_p);

  const auto pairs = free_ratio_pairs(p);
  const std::size_t m = pairs.size();
  const std::size_t patterns = m <= options.sign_search_limit ? (std::size_t{1} << m) : 1;

  MaxEntropyFit best;
  best.entropy = kNegInf;
  bool any_converged = false;

  for (std::size_t pattern = 0; pattern < patterns; ++pattern) {
    std::vector<int> signs(m);
    for (std::size_t k = 0; k < m; ++k) signs[k] = ((pattern >> k) & 1u) ? -1 : 1;
    std::vector<double> r(m, 0.0);
    auto eval = [&](const std::vector<double>& ratios) {
      return entropy_or_neg_inf(same_moment_sigma(target, ratios, signs));
    };
    double current = eval(r);
    std::size_t sweep = 0;
    bool converged = m == 0;
    while (!converged && sweep < options.max_sweeps) {
      ++sweep;
      const double before = current;
      for (std::size_t c = 0; c < m; ++c) {
        double best_r = r[c];
        double best_h = current;
        for (double g = -options.ratio_range; g <= options.ratio_range + 1e-12; g += options.grid_step) {
          r[c] = g;
          const double h = eval(r);
          if (h > best_h) {
            best_h = h;
            best_r = g;
          }
        }
        // Golden-section refinement around the best grid point.
        constexpr double kInvPhi = 0.6180339887498949;
        double a = best_r - options.grid_step;
        double b = best_r + options.grid_step;
        double x1 = b - kInvPhi * (b - a);
        double x2 = a + kInvPhi * (b - a);
        r[c] = x1;
        double f1 = eval(r);
        r[c] = x2;
        double f2 = eval(r);
        for (int it = 0; it < 80 && b - a > 1e-10; ++it) {
          if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            r[c] = x1;
            f1 = eval(r);
          } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            r[c] = x2;
            f2 = eval(r);
          }
        }
        if (f1 > best_h) {
          best_h = f1;
          best_r = x1;
        }
        if (f2 > best_h) {
          best_h = f2;
          best_r = x2;
        }
        r[c] = best_r;
        current = best_h;
      }
      if (current == kNegInf) break;  // nothing feasible from this pattern
      if (current - before <= options.tolerance) converged = true;
    }
    if (current == kNegInf) continue;
    if (converged) any_converged = true;
    if (current > best.entropy) {
      best.sigma = same_moment_sigma(target, r, signs);
      best.ratios = r;
      best.signs = signs;
      best.entropy = current;
      best.sweeps = sweep;
    }
  }

  if (best.entropy == kNegInf) {
    throw Error(Errc::InfeasibleTarget, "no searched parameterization gives positive probabilities");
  }
  if (!any_converged) {
    throw Error(Errc::NonConvergence, "entropy coordinate ascent did not converge");
  }
  return best;
}

GrassmannBinary fit_max_entropy(const MomentTarget& target, const MaxEntropyOptions& options) {
  const MaxEntropyFit fit = maximize_entropy(target, options);
  BuildOptions build;
  build.check = CheckMode::Always;
  build.max_p = options.max_p;
  GrassmannBinary model = GrassmannBinary::from_sigma(fit.sigma, build);
  if (!model.valid()) throw Error(Errc::InfeasibleTarget, "best parameterization is not a valid model");
  return model;
}

// ---------------------------------------------------------------------------
// MAP estimation

double log_posterior(const Matrix& sigma, std::span<const double> counts, double gamma) {
  const std::size_t p = sigma.rows();
  if (!sigma.square()) throw Error(Errc::DimensionMismatch, "Sigma must be square");
  if (p > 62 || counts.size() != (std::size_t{1} << p)) {
    throw Error(Errc::DimensionMismatch, "counts must have 2^p entries");
  }
  const auto table = table_from_sigma(sigma);
  double total = 0.0;
  for (State s = 0; s < table.size(); ++s) {
    if (!(table[s] > 0.0)) {
      throw Error(Errc::NonPositiveProbability,
                  "pi = " + std::to_string(table[s]) + " at state " + std::to_string(s),
                  {static_cast<std::size_t>(s)});
    }
    total += (counts[s] + gamma) * std::log(table[s]);
  }
  return total;
}

std::vector<double> state_counts(const Dataset& data, std::size_t cap) {
  check_enumeration_cap(data.dim(), cap);
  std::vector<double> counts(State{1} << data.dim(), 0.0);
  for (const auto& [s, c] : data.counts()) counts[s] = static_cast<double>(c);
  return counts;
}

void FitConfig::validate() const {
  if (!(gamma > 0.0)) throw Error(Errc::ParseError, "gamma must be positive");
  if (!(gradient_tolerance > 0.0)) throw Error(Errc::ParseError, "gradient tolerance must be positive");
}

GaugeLayout::GaugeLayout(std::size_t p) : p_(p) {
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (i != j && !(j == 0 && i != 0)) entries_.emplace_back(i, j);
}

std::pair<std::size_t, std::size_t> GaugeLayout::entry(std::size_t k) const {
  if (k < p_) return {k, k};
  return entries_.at(k - p_);
}

std::optional<std::size_t> GaugeLayout::index_of(std::size_t row, std::size_t col) const {
  if (row == col) return row;
  const auto it = std::find(entries_.begin(), entries_.end(), std::make_pair(row, col));
  if (it == entries_.end()) return std::nullopt;
  return p_ + static_cast<std::size_t>(it - entries_.begin());
}

std::vector<double> GaugeLayout::pack(const Matrix& sigma) const {
  std::vector<double> theta(size());
  for (std::size_t i = 0; i < p_; ++i) theta[i] = logit(sigma(i, i));
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    theta[p_ + k] = sigma(entries_[k].first, entries_[k].second);
  }
  return theta;
}

Matrix GaugeLayout::unpack(std::span<const double> theta) const {
  Matrix sigma(p_, p_);
  for (std::size_t i = 0; i < p_; ++i) sigma(i, i) = sigmoid(theta[i]);
  for (std::size_t i = 1; i < p_; ++i) sigma(i, 0) = -1.0;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    sigma(entries_[k].first, entries_[k].second) = theta[p_ + k];
  }
  return sigma;
}

Matrix canonicalize_gauge(const Matrix& sigma) {
  if (!sigma.square()) throw Error(Errc::DimensionMismatch, "Sigma must be square");
  const std::size_t p = sigma.rows();
  std::vector<double> c(p, 1.0);
  for (std::size_t i = 1; i < p; ++i) {
    if (std::abs(sigma(i, 0)) > 1e-300) c[i] = -1.0 / sigma(i, 0);
  }
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) out(i, j) = c[i] * sigma(i, j) / c[j];
  for (std::size_t i = 1; i < p; ++i)
    if (std::abs(sigma(i, 0)) > 1e-300) out(i, 0) = -1.0;
  return out;
}

namespace {

// Per-observation log posterior over the gauge-fixed parameters.
class MapObjective {
 public:
  MapObjective(std::size_t p, std::span<const double> counts, double gamma)
      : layout_(p), weights_(counts.begin(), counts.end()) {
    for (double& w : weights_) w += gamma;
    total_ = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  }

  const GaugeLayout& layout() const { return layout_; }
  double total_weight() const { return total_; }

  double value(std::span<const double> theta) const {
    const Matrix sigma = layout_.unpack(theta);
    const std::size_t p = layout_.dim();
    double acc = 0.0;
    for (State s = 0; s < weights_.size(); ++s) {
      const double pi = parity_sign(s, p) * determinant(shifted_sigma(sigma, s));
      if (!(pi > 0.0)) return kNegInf;
      acc += weights_[s] * std::log(pi);
    }
    return acc / total_;
  }

  // Returns false when some state probability is not positive.
  bool derivatives(std::span<const double> theta, double& value, std::vector<double>& grad,
                   Matrix& hess) const {
    const Matrix sigma = layout_.unpack(theta);
    const std::size_t p = layout_.dim();
    const std::size_t n = layout_.size();
    std::vector<std::pair<std::size_t, std::size_t>> at(n);
    for (std::size_t k = 0; k < n; ++k) at[k] = layout_.entry(k);

    value = 0.0;
    std::vector<double> g_sigma(n, 0.0);
    Matrix h_sigma(n, n);
    for (State s = 0; s < weights_.size(); ++s) {
      const LuDecomposition lu(shifted_sigma(sigma, s));
      const double pi = parity_sign(s, p) * lu.determinant();
      if (!(pi > 0.0) || lu.singular()) return false;
      const double w = weights_[s];
      value += w * std::log(pi);
      const Matrix inv = lu.inverse();
      for (std::size_t k = 0; k < n; ++k) {
        const auto [ak, bk] = at[k];
        g_sigma[k] += w * inv(bk, ak);
        for (std::size_t l = k; l < n; ++l) {
          const auto [al, bl] = at[l];
          h_sigma(k, l) -= w * inv(bk, al) * inv(bl, ak);
        }
      }
    }
    value /= total_;
    grad.assign(n, 0.0);
    hess = Matrix(n, n);
    std::vector<double> jac(n, 1.0);
    for (std::size_t i = 0; i < p; ++i) {
      const double m = sigma(i, i);
      jac[i] = m * (1.0 - m);
    }
    for (std::size_t k = 0; k < n; ++k) grad[k] = g_sigma[k] * jac[k] / total_;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = k; l < n; ++l) {
        hess(k, l) = h_sigma(k, l) * jac[k] * jac[l] / total_;
        hess(l, k) = hess(k, l);
      }
    }
    for (std::size_t i = 0; i < p; ++i) {
      const double m = sigma(i, i);
      hess(i, i) += g_sigma[i] / total_ * m * (1.0 - m) * (1.0 - 2.0 * m);
    }
    return true;
  }

 private:
  GaugeLayout layout_;
  std::vector<double> weights_;
  double total_ = 0.0;
};

bool feasible(const Matrix& sigma) {
  for (double pi : table_from_sigma(sigma))
    if (!(pi > 0.0)) return false;
  return true;
}

Matrix independent_start(std::span<const double> means) {
  const std::size_t p = means.size();
  Matrix sigma(p, p);
  for (std::size_t i = 0; i < p; ++i) sigma(i, i) = means[i];
  for (std::size_t i = 1; i < p; ++i) sigma(i, 0) = -1.0;
  return sigma;
}

// Shrinks the free off-diagonal entries toward zero until every state is
// positive, falling back to the independent model.
Matrix make_feasible(Matrix sigma) {
  const std::size_t p = sigma.rows();
  for (int attempt = 0; attempt < 40; ++attempt) {
    if (feasible(sigma)) return sigma;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        if (i != j && !(j == 0 && i != 0)) sigma(i, j) *= 0.5;
  }
  std::vector<double> means(p);
  for (std::size_t i = 0; i < p; ++i) means[i] = sigma(i, i);
  return independent_start(means);
}

struct StartPoints {
  std::vector<double> means;
  Matrix cov;
};

StartPoints empirical_moments(std::size_t p, std::span<const double> counts) {
  StartPoints sp{std::vector<double>(p, 0.0), Matrix(p, p)};
  double n = 0.0;
  for (State s = 0; s < counts.size(); ++s) {
    n += counts[s];
    for (std::size_t i = 0; i < p; ++i)
      if ((s >> i) & 1u) sp.means[i] += counts[s];
  }
  std::vector<double> raw(p);
  for (std::size_t i = 0; i < p; ++i) raw[i] = n > 0 ? sp.means[i] / n : 0.5;
  for (std::size_t i = 0; i < p; ++i) sp.means[i] = (sp.means[i] + 0.5) / (n + 1.0);
  if (n >= 2.0) {
    for (State s = 0; s < counts.size(); ++s) {
      if (counts[s] == 0.0) continue;
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          sp.cov(i, j) += counts[s] * (static_cast<double>((s >> i) & 1u) - raw[i]) *
                          (static_cast<double>((s >> j) & 1u) - raw[j]);
    }
    sp.cov = (1.0 / (n - 1.0)) * sp.cov;
  }
  return sp;
}

// Moment-matching start with the split of each free pair signed by `signs`.
Matrix moment_matching_start(const StartPoints& sp, std::span<const int> signs) {
  const std::vector<double> ratios(signs.size(), 0.0);
  return same_moment_sigma(MomentTarget{sp.means, sp.cov}, ratios, signs);
}

std::string sign_label(std::span<const int> signs) {
  std::string out;
  for (int s : signs) out += s < 0 ? '-' : '+';
  return out;
}

// Sign patterns for the free pairs: all of them up to `limit` pairs, else
// the two uniform patterns and every single flip of the all-plus pattern.
std::vector<std::vector<int>> sign_patterns(std::size_t pairs, std::size_t limit) {
  std::vector<std::vector<int>> out;
  if (pairs <= limit) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs); ++mask) {
      std::vector<int> s(pairs);
      for (std::size_t k = 0; k < pairs; ++k) s[k] = ((mask >> k) & 1u) ? -1 : 1;
      out.push_back(std::move(s));
    }
    return out;
  }
  out.emplace_back(pairs, 1);
  out.emplace_back(pairs, -1);
  for (std::size_t k = 0; k < pairs; ++k) {
    std::vector<int> s(pairs, 1);
    s[k] = -1;
    out.push_back(std::move(s));
  }
  return out;
}

FitReport run_newton(const MapObjective& obj, const Matrix& start, const FitConfig& config,
                     std::string label) {
  const GaugeLayout& layout = obj.layout();
  std::vector<double> theta = layout.pack(start);
  FitReport report;
  report.start = std::move(label);

  double value = 0.0;
  std::vector<double> grad;
  Matrix hess;
  if (!obj.derivatives(theta, value, grad, hess)) {
    throw Error(Errc::NonPositiveProbability, "starting point has a non-positive state probability");
  }
  report.log_posterior_trace.push_back(value * obj.total_weight());

  const std::size_t n = theta.size();
  for (std::size_t iter = 0;; ++iter) {
    report.gradient_norm = max_norm(grad);
    if (report.gradient_norm < config.gradient_tolerance) {
      report.converged = true;
      break;
    }
    if (iter >= config.max_newton_iters) break;
    report.iterations = iter + 1;

    // Newton step on -H, diagonally shifted until Cholesky succeeds.
    Matrix neg = -1.0 * hess;
    Matrix chol;
    double shift = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, std::abs(neg(k, k)));
    scale = std::max(scale, 1e-12);
    bool ok = cholesky(neg, chol);
    if (!ok) ++report.hessian_fallbacks;
    for (int attempt = 0; !ok && attempt < 40; ++attempt) {
      shift = shift == 0.0 ? 1e-8 * scale : shift * 10.0;
      Matrix shifted = neg;
      for (std::size_t k = 0; k < n; ++k) shifted(k, k) += shift;
      ok = cholesky(shifted, chol);
    }
    std::vector<double> step = ok ? cholesky_solve(chol, grad) : grad;
    double slope = 0.0;
    for (std::size_t k = 0; k < n; ++k) slope += grad[k] * step[k];

    bool accepted = false;
    double alpha = 1.0;
    std::vector<double> trial(n);
    for (std::size_t h = 0; h <= config.step_halving_limit; ++h, alpha *= 0.5) {
      for (std::size_t k = 0; k < n; ++k) trial[k] = theta[k] + alpha * step[k];
      const double v = obj.value(trial);
      const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value));
      if (v > kNegInf && v >= value + 1e-4 * alpha * slope - slack) {
        double nv;
        std::vector<double> ng;
        Matrix nh;
        if (obj.derivatives(trial, nv, ng, nh)) {
          theta = trial;
          value = nv;
          grad = std::move(ng);
          hess = std::move(nh);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      report.gradient_norm = max_norm(grad);
      report.converged = report.gradient_norm < config.gradient_tolerance;
      break;
    }
    report.log_posterior_trace.push_back(value * obj.total_weight());
  }

  report.sigma = layout.unpack(theta);
  report.log_posterior = value * obj.total_weight();
  return report;
}

double table_spread(const Matrix& a, const Matrix& b) {
  const auto ta = table_from_sigma(a);
  const auto tb = table_from_sigma(b);
  double d = 0.0;
  for (std::size_t s = 0; s < ta.size(); ++s) d = std::max(d, std::abs(ta[s] - tb[s]));
  return d;
}

}  // namespace

FitReport fit_map_counts(std::size_t p, std::span<const double> counts, const FitConfig& config) {
  config.validate();
  if (p == 0) throw Error(Errc::EmptyIndexSet, "cannot fit a zero-dimensional model");
  check_enumeration_cap(p, config.max_p);
  if (counts.size() != (std::size_t{1} << p)) {
    throw Error(Errc::DimensionMismatch, "counts must have 2^p entries");
  }
  const MapObjective obj(p, counts, config.gamma);
  const StartPoints sp = empirical_moments(p, counts);

  std::vector<std::pair<std::string, Matrix>> starts;
  if (config.initial_sigma) {
    if (config.initial_sigma->rows() != p || !config.initial_sigma->square()) {
      throw Error(Errc::DimensionMismatch, "initial Sigma has the wrong shape");
    }
    starts.emplace_back("given", make_feasible(canonicalize_gauge(*config.initial_sigma)));
  } else if (config.init == InitMode::Independent) {
    starts.emplace_back("independent", independent_start(sp.means));
  } else {
    // Rank every sign pattern by its starting objective; keep the best few.
    std::vector<std::pair<double, std::pair<std::string, Matrix>>> ranked;
    for (const auto& signs : sign_patterns(free_ratio_pairs(p).size(), config.sign_search_limit)) {
      Matrix start = make_feasible(moment_matching_start(sp, signs));
      ranked.push_back({obj.value(obj.layout().pack(start)),
                        {"moment-matching" + (signs.empty() ? "" : "[" + sign_label(signs) + "]"),
                         std::move(start)}});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    const std::size_t keep = std::min(std::max<std::size_t>(config.moment_starts, 1), ranked.size());
    for (std::size_t k = 0; k < keep; ++k) starts.push_back(std::move(ranked[k].second));
  }
  if (config.multistart) {
    if (config.init != InitMode::Independent || config.initial_sigma) {
      starts.emplace_back("independent", independent_start(sp.means));
    }
    starts.emplace_back("transposed", make_feasible(canonicalize_gauge(starts.front().second.transposed())));
  }

  std::vector<FitReport> runs;
  for (auto& [label, start] : starts) {
    FitReport r = run_newton(obj, start, config, label);
    if (!r.converged) {
      // Retry from the transposed representative of the best iterate.
      const Matrix flipped = make_feasible(canonicalize_gauge(r.sigma.transposed()));
      FitReport retry = run_newton(obj, flipped, config, label + "+transposed");
      if (retry.converged || retry.log_posterior > r.log_posterior) {
        retry.iterations += r.iterations;
        r = std::move(retry);
      }
    }
    runs.push_back(std::move(r));
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k) {
    const bool better_status = runs[k].converged && !runs[best].converged;
    const bool same_status = runs[k].converged == runs[best].converged;
    if (better_status || (same_status && runs[k].log_posterior > runs[best].log_posterior)) best = k;
  }
  FitReport report = runs[best];
  if (runs.size() > 1) {
    double spread = 0.0;
    for (const auto& r : runs) {
      if (r.converged) spread = std::max(spread, table_spread(r.sigma, report.sigma));
    }
    report.multistart_spread = spread;
  }
  return report;
}

FitReport fit_map(const Dataset& data, const FitConfig& config) {
  return fit_map_counts(data.dim(), state_counts(data, config.max_p), config);
}

// ---------------------------------------------------------------------------

AsymptoticVariances map_asymptotic_variances(const Matrix& truth, std::size_t n) {
  const Matrix sigma = canonicalize_gauge(truth);
  const std::size_t p = sigma.rows();
  const GaugeLayout layout(p);
  const std::size_t k = layout.size();
  const auto table = table_from_sigma(sigma);

  std::vector<std::vector<double>> score(table.size(), std::vector<double>(k));
  Matrix info(k, k);
  for (State s = 0; s < table.size(); ++s) {
    const Matrix inv = inverse(shifted_sigma(sigma, s));
    for (std::size_t a = 0; a < k; ++a) {
      const auto [r, c] = layout.entry(a);
      const double jac = r == c ? sigma(r, r) * (1.0 - sigma(r, r)) : 1.0;
      score[s][a] = inv(c, r) * jac;
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) info(a, b) += table[s] * score[s][a] * score[s][b];
  }

  AsymptoticVariances out;
  out.mean.assign(p, kNaN);
  out.sigma_entries = Matrix(p, p, kNaN);
  out.covariance = Matrix(p, p, kNaN);
  out.probability.assign(table.size(), kNaN);
  const LuDecomposition lu(info);
  if (lu.singular()) return out;
  Matrix cov = (1.0 / static_cast<double>(n)) * lu.inverse();

  auto quad = [&](const std::vector<double>& g) {
    double v = 0.0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) v += g[a] * cov(a, b) * g[b];
    return v;
  };

  for (std::size_t i = 0; i < p; ++i) {
    const double d = sigma(i, i) * (1.0 - sigma(i, i));
    out.mean[i] = d * d * cov(i, i);
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (i == j) {
        out.sigma_entries(i, i) = out.mean[i];
        continue;
      }
      const auto idx = layout.index_of(i, j);
      out.sigma_entries(i, j) = idx ? cov(*idx, *idx) : 0.0;
      // d(-Sigma_ij Sigma_ji); pinned entries contribute nothing.
      std::vector<double> g(k, 0.0);
      if (const auto a = layout.index_of(i, j)) g[*a] -= sigma(j, i);
      if (const auto b = layout.index_of(j, i)) g[*b] -= sigma(i, j);
      out.covariance(i, j) = quad(g);
    }
  }
  for (State s = 0; s < table.size(); ++s) {
    std::vector<double> g(k);
    for (std::size_t a = 0; a < k; ++a) g[a] = table[s] * score[s][a];
    out.probability[s] = quad(g);
  }
  return out;
}

}  // namespace grassbin
