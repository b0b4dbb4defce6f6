#include <doctest.h>

#include <cmath>
#include <random>

#include "grassbin/error.hpp"
#include "grassbin/estimation.hpp"
#include "grassbin/experiment.hpp"
#include "grassbin/oracle.hpp"
#include "support.hpp"

using namespace grassbin;
using namespace testing_support;

namespace {

Dataset rows(std::size_t p, std::initializer_list<State> states) {
  Dataset d(p);
  for (State s : states) d.add(s);
  return d;
}

double kl(const std::vector<double>& q, const std::vector<double>& pi) {
  double acc = 0.0;
  for (std::size_t s = 0; s < q.size(); ++s)
    if (q[s] > 0.0) acc += q[s] * std::log(q[s] / pi[s]);
  return acc;
}

}  // namespace

TEST_CASE("summarize") {
  const auto two = summarize(rows(2, {0b01, 0b10}));
  CHECK(two.n == 2);
  CHECK(two.means[0] == 0.5);
  CHECK(two.means[1] == 0.5);
  CHECK(two.covariances(0, 1) == doctest::Approx(-0.5));
  CHECK(two.covariances(1, 0) == doctest::Approx(-0.5));
  CHECK(two.empirical[0b01] == 0.5);
  CHECK(two.empirical[0b11] == 0.0);

  const auto same = summarize(rows(3, {0b101, 0b101, 0b101}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(same.covariances(i, j) == 0.0);

  const auto one = summarize(rows(2, {0b11}));
  CHECK(std::isnan(one.covariances(0, 1)));

  SeededRng rng(17);
  const auto s = summarize(sample(reference_model(), 333, rng));
  double total = 0.0;
  for (double q : s.empirical) total += q;
  CHECK(total == doctest::Approx(1.0));

  CHECK_THROWS_AS(summarize(Dataset(2)), Error);
}

TEST_CASE("theoretical sampling moments") {
  const auto b = GrassmannBinary::from_sigma(Matrix{{0.7}});
  CHECK(theoretical_stat_moments(b, 500).var_xbar[0] == doctest::Approx(0.00042));

  const std::vector<double> mu{0.3, 0.6};
  const auto ind = GrassmannBinary::from_sigma(Matrix::diagonal(mu));
  const std::size_t n = 40;
  const auto m = theoretical_stat_moments(ind, n);
  const double nn = n;
  CHECK(m.mean_s(0, 1) == 0.0);
  CHECK(m.var_s(0, 1) == doctest::Approx(0.21 * 0.24 * (1.0 / nn + 1.0 / (nn * (nn - 1.0)))));

  const auto& ref = reference_model();
  const auto r = theoretical_stat_moments(ref, 200);
  const auto table = ref.joint_table();
  for (State s = 0; s < table.size(); ++s) {
    CHECK(r.mean_q[s] == doctest::Approx(table[s]));
    CHECK(r.var_q[s] == doctest::Approx(table[s] * (1 - table[s]) / 200.0));
  }
  CHECK(r.mean_s(0, 2) == doctest::Approx(ref.covariance(0, 2)));

  CHECK_THROWS_AS(theoretical_stat_moments(ref, 1), Error);
}

TEST_CASE("moment targets") {
  const Matrix rho{{1, 0.5}, {0.5, 1}};
  const auto t = MomentTarget::from_correlations({0.5, 0.5}, rho);
  CHECK(t.covariances(0, 1) == doctest::Approx(0.125));
  CHECK(t.correlation(0, 1) == doctest::Approx(0.5));
  const Matrix too_big{{1, 1.5}, {1.5, 1}};
  CHECK_THROWS_AS(MomentTarget::from_correlations({0.5, 0.5}, too_big), Error);
  CHECK_THROWS_AS(MomentTarget::from_correlations({0.0, 0.5}, rho), Error);
  CHECK(free_ratio_pairs(5).size() == 6);
  CHECK(free_ratio_pairs(2).empty());
}

TEST_CASE("same-moment parameterizations reproduce the target moments") {
  const MomentTarget target = reference_target();
  const auto pairs = free_ratio_pairs(5);
  std::mt19937_64 rng(307);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ratios(pairs.size());
    std::vector<int> signs(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      ratios[k] = uniform(rng, -2.0, 2.0);
      signs[k] = rng() % 2 ? 1 : -1;
    }
    const auto d = unchecked(same_moment_sigma(target, ratios, signs));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(d.mean(i) == doctest::Approx(target.means[i]));
      for (std::size_t j = i + 1; j < 5; ++j) CHECK(d.covariance(i, j) == doctest::Approx(target.covariances(i, j)));
    }
  }
}

TEST_CASE("maximum entropy fit") {
  const Matrix rho2{{1, -0.3}, {-0.3, 1}};
  const auto two = fit_max_entropy(MomentTarget::from_correlations({0.4, 0.8}, rho2));
  CHECK(two.valid());
  CHECK(two.mean(0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(two.pearson(0, 1) == doctest::Approx(-0.3).epsilon(1e-10));

  const std::vector<double> mu{0.2, 0.5, 0.9};
  const auto diag = fit_max_entropy(MomentTarget::from_correlations(mu, Matrix::identity(3)));
  double h = 0.0;
  for (double m : mu) h += binary_entropy(m);
  CHECK(diag.entropy() == doctest::Approx(h).epsilon(1e-10));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(std::abs(diag.covariance(i, j)) < 1e-12);

  const auto& ref = reference_model();
  const MomentTarget target = reference_target();
  CHECK(ref.valid());
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(ref.mean(i) - target.means[i]) < 1e-6);
    CHECK(ref.sigma()(i, i) == doctest::Approx(target.means[i]));
    if (i > 0) CHECK(ref.sigma()(i, 0) == -1.0);
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(std::abs(ref.pearson(i, j) - target.correlation(i, j)) < 1e-6);
  }
}

TEST_CASE("log posterior") {
  // Bernoulli: maximized at (n1 + gamma) / (N + 2 gamma).
  const std::vector<double> counts{3.0, 7.0};
  const double gamma = 0.01;
  const double best = 7.01 / 10.02;
  const double at = log_posterior(Matrix{{best}}, counts, gamma);
  CHECK(at > log_posterior(Matrix{{best + 1e-4}}, counts, gamma));
  CHECK(at > log_posterior(Matrix{{best - 1e-4}}, counts, gamma));
  CHECK(at == doctest::Approx(3.01 * std::log(1 - best) + 7.01 * std::log(best)));

  std::mt19937_64 rng(311);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 2 + rng() % 4;
    const Matrix sigma = random_valid_sigma(p, rng);
    std::vector<double> c(std::size_t{1} << p);
    for (double& v : c) v = static_cast<double>(rng() % 20);
    const double base = log_posterior(sigma, c, gamma);
    CHECK(log_posterior(canonicalize_gauge(sigma), c, gamma) == doctest::Approx(base).epsilon(1e-10));
    CHECK(log_posterior(sigma.transposed(), c, gamma) == doctest::Approx(base).epsilon(1e-10));
  }

  try {
    log_posterior(Matrix{{0.5, 0.9}, {0.9, 0.5}}, std::vector<double>(4, 1.0), gamma);
    FAIL("expected NonPositiveProbability");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonPositiveProbability);
    CHECK(e.detail() == std::vector<std::size_t>{0});
  }
  CHECK_THROWS_AS(log_posterior(Matrix{{0.5}}, std::vector<double>(4, 1.0), gamma), Error);
}

TEST_CASE("gauge canonicalization") {
  const Matrix& canon = reference_model().sigma();
  CHECK(max_abs_diff(canonicalize_gauge(canon), canon) < 1e-15);
  const Matrix scaled = gauge_scale(canon, 2, 2.0);
  CHECK(max_abs_diff(canonicalize_gauge(scaled), canon) < 1e-14);

  std::mt19937_64 rng(313);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t p = 1 + rng() % 6;
    const Matrix sigma = random_valid_sigma(p, rng);
    const Matrix c = canonicalize_gauge(sigma);
    for (std::size_t i = 1; i < p; ++i) CHECK(c(i, 0) == -1.0);
    CHECK(max_table_diff(unchecked(c).joint_table(), unchecked(sigma).joint_table()) < 1e-10);
  }

  // A zero first-column entry leaves its row unscaled.
  const Matrix z{{0.5, 0.1, 0.2}, {0.0, 0.4, 0.1}, {-0.5, 0.2, 0.6}};
  const Matrix cz = canonicalize_gauge(z);
  CHECK(cz(1, 0) == 0.0);
  CHECK(cz(2, 0) == -1.0);
  CHECK(max_table_diff(unchecked(cz).joint_table(), unchecked(z).joint_table()) < 1e-12);
}

TEST_CASE("gauge layout") {
  const GaugeLayout layout(4);
  CHECK(layout.size() == 16 - 3);
  CHECK(layout.entry(2) == std::make_pair<std::size_t, std::size_t>(2, 2));
  CHECK_FALSE(layout.index_of(2, 0));
  CHECK(layout.index_of(0, 3));
  std::mt19937_64 rng(317);
  const Matrix sigma = canonicalize_gauge(random_valid_sigma(4, rng));
  const auto theta = layout.pack(sigma);
  CHECK(max_abs_diff(layout.unpack(theta), sigma) < 1e-14);
}

TEST_CASE("MAP fit: Bernoulli closed form") {
  Dataset d(1);
  for (int k = 0; k < 10; ++k) d.add(State{k < 7 ? 1u : 0u});
  const FitReport r = fit_map(d);
  CHECK(r.converged);
  CHECK(r.sigma(0, 0) == doctest::Approx(7.01 / 10.02).epsilon(1e-9));
  CHECK(r.log_posterior == doctest::Approx(r.log_posterior_trace.back()));
}

TEST_CASE("MAP fit is stationary and dominates the truth on its objective") {
  const auto& ref = reference_model();
  SeededRng rng(331);
  const Dataset data = sample(ref, 10000, rng);
  const auto counts = state_counts(data);
  FitConfig cfg;
  const FitReport r = fit_map(data, cfg);
  REQUIRE(r.converged);
  for (std::size_t i = 1; i < 5; ++i) CHECK(r.sigma(i, 0) == -1.0);
  for (std::size_t k = 1; k < r.log_posterior_trace.size(); ++k)
    CHECK(r.log_posterior_trace[k] >= r.log_posterior_trace[k - 1] - 1e-9);

  const auto q = summarize(data).empirical;
  const auto fitted = unchecked(r.sigma).joint_table();
  CHECK(kl(q, fitted) < kl(q, ref.joint_table()) + 1e-9);
  CHECK(kl(q, fitted) < 1e-3);

  // Central differences of the objective vanish at the optimum.
  const GaugeLayout layout(5);
  auto theta = layout.pack(r.sigma);
  const double h = 1e-5;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto up = theta, down = theta;
    up[k] += h;
    down[k] -= h;
    const double g = (log_posterior(layout.unpack(up), counts, cfg.gamma) -
                      log_posterior(layout.unpack(down), counts, cfg.gamma)) /
                     (2 * h);
    CHECK(std::abs(g) / 10000.0 < 1e-6);
  }
}

TEST_CASE("MAP fit on independent data") {
  const std::vector<double> mu{0.3, 0.6, 0.5, 0.8};
  const auto ind = GrassmannBinary::from_sigma(Matrix::diagonal(mu));
  SeededRng rng(337);
  const Dataset data = sample(ind, 5000, rng);
  const FitReport r = fit_map(data);
  REQUIRE(r.converged);
  const auto est = unchecked(r.sigma);
  const auto m = theoretical_stat_moments(ind, 5000);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(std::abs(est.covariance(i, j)) < 4 * std::sqrt(m.var_s(i, j)));
}

TEST_CASE("MAP fit reports non-convergence") {
  SeededRng rng(347);
  const Dataset data = sample(reference_model(), 500, rng);
  FitConfig cfg;
  cfg.max_newton_iters = 0;
  const FitReport r = fit_map(data, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 0);

  cfg = FitConfig{};
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(fit_map(data, cfg), Error);
}

TEST_CASE("MAP multistart diagnostics") {
  SeededRng rng(349);
  const Dataset data = sample(reference_model(), 2000, rng);
  FitConfig cfg;
  cfg.multistart = true;
  const FitReport r = fit_map(data, cfg);
  CHECK(r.converged);
  REQUIRE(r.multistart_spread);
  CHECK(*r.multistart_spread >= 0.0);
  cfg = FitConfig{};
  cfg.init = InitMode::Independent;
  const FitReport ri = fit_map(data, cfg);
  CHECK(ri.start.starts_with("independent"));
}

TEST_CASE("MAP means are consistent") {
  const auto& ref = reference_model();
  const std::vector<std::size_t> sizes{50, 200, 2000};
  std::vector<double> rmse;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      SeededRng rng(1000 * (k + 1) + seed);
      const FitReport r = fit_map(sample(ref, sizes[k], rng));
      for (std::size_t i = 0; i < 5; ++i) acc += std::pow(r.sigma(i, i) - ref.mean(i), 2);
    }
    rmse.push_back(std::sqrt(acc / 250.0));
  }
  CHECK(rmse[1] < rmse[0]);
  CHECK(rmse[2] < rmse[1]);
}

TEST_CASE("asymptotic variances") {
  const auto v = map_asymptotic_variances(Matrix{{0.3}}, 100);
  CHECK(v.mean[0] == doctest::Approx(0.21 / 100));
  CHECK(v.probability[1] == doctest::Approx(0.21 / 100));

  const auto& ref = reference_model();
  const auto a = map_asymptotic_variances(ref.sigma(), 500);
  const auto b = map_asymptotic_variances(ref.sigma(), 5000);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.mean[i] == doctest::Approx(10 * b.mean[i]));
    // The MLE of a marginal mean has the binomial variance.
    CHECK(a.mean[i] == doctest::Approx(ref.mean(i) * (1 - ref.mean(i)) / 500).epsilon(1e-6));
  }
}
