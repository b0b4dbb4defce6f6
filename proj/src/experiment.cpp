#include "grassbin/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>

#include "grassbin/error.hpp"
#include "grassbin/io.hpp"
#include "grassbin/sampler.hpp"

namespace grassbin {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

MomentTarget reference_target() {
  const std::vector<double> mu{0.77, 0.37, 0.67, 0.42, 0.7};
  Matrix rho = Matrix::identity(5);
  auto set = [&](std::size_t i, std::size_t j, double r) {
    rho(i - 1, j - 1) = r;
    rho(j - 1, i - 1) = r;
  };
  set(1, 2, -0.03);
  set(1, 3, 0.32);
  set(1, 4, -0.1);
  set(1, 5, 0.04);
  set(2, 3, 0.004);
  set(2, 4, 0.003);
  set(2, 5, 0.06);
  set(3, 4, -0.03);
  set(3, 5, 0.05);
  set(4, 5, -0.19);
  return MomentTarget::from_correlations(mu, rho);
}

const GrassmannBinary& reference_model() {
  static const GrassmannBinary model = fit_max_entropy(reference_target());
  return model;
}

std::optional<ExperimentKind> parse_experiment_kind(const std::string& name) {
  if (name == "statistics") return ExperimentKind::Statistics;
  if (name == "map-estimates") return ExperimentKind::MapEstimates;
  if (name == "sigma-estimates") return ExperimentKind::SigmaEstimates;
  return std::nullopt;
}

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Statistics: return "statistics";
    case ExperimentKind::MapEstimates: return "map-estimates";
    case ExperimentKind::SigmaEstimates: return "sigma-estimates";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::Statistics:
      c.trials = 5000;
      c.sizes = {50, 200, 500};
      break;
    case ExperimentKind::MapEstimates:
      c.trials = 2000;
      c.sizes = {50, 200, 500};
      break;
    case ExperimentKind::SigmaEstimates:
      c.trials = 2000;
      c.sizes = {50, 500, 5000};
      break;
  }
  return c;
}

const Series* ExperimentResult::find(const std::string& name, std::size_t n) const {
  for (const auto& s : series)
    if (s.name == name && s.n == n) return &s;
  return nullptr;
}

std::string state_label(State s, std::size_t p) {
  std::string out;
  for (std::size_t i = 0; i < p; ++i) out += ((s >> i) & 1u) ? '1' : '0';
  return out;
}

double mc_mean(std::span<const double> v) {
  double acc = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    acc += x;
    ++n;
  }
  return n ? acc / static_cast<double>(n) : kNaN;
}

double mc_variance(std::span<const double> v) {
  const double m = mc_mean(v);
  double acc = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    acc += (x - m) * (x - m);
    ++n;
  }
  return n >= 2 ? acc / static_cast<double>(n - 1) : kNaN;
}

double mc_skewness(std::span<const double> v) {
  const double m = mc_mean(v);
  double m2 = 0.0, m3 = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    ++n;
  }
  if (n < 3) return kNaN;
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  return m3 / std::pow(m2, 1.5);
}

namespace {

std::string pair_name(const char* prefix, std::size_t i, std::size_t j) {
  return prefix + std::to_string(i + 1) + std::to_string(j + 1);
}

// Series layout for one sample size, with theory columns filled in.
std::vector<Series> make_series(const GrassmannBinary& truth, const ExperimentConfig& cfg,
                                std::size_t n, const std::optional<AsymptoticVariances>& asym,
                                const Matrix& canonical, const Matrix& canonical_t) {
  const std::size_t p = truth.dim();
  const std::string qname = state_label(cfg.tracked_state, p);
  const double pi = truth.joint_prob(cfg.tracked_state);
  std::vector<Series> out;
  auto add = [&](std::string name, double mean, double var) {
    Series s;
    s.name = std::move(name);
    s.n = n;
    s.values.assign(cfg.trials, kNaN);
    s.theory_mean = mean;
    s.theory_var = var;
    out.push_back(std::move(s));
  };
  const double nn = static_cast<double>(n);

  switch (cfg.kind) {
    case ExperimentKind::Statistics: {
      const auto moments = n >= 2 ? std::optional(theoretical_stat_moments(truth, n)) : std::nullopt;
      for (std::size_t i = 0; i < p; ++i) {
        const double mu = truth.mean(i);
        add("xbar" + std::to_string(i + 1), mu, mu * (1.0 - mu) / nn);
      }
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j)
          add(pair_name("s", i, j), moments ? moments->mean_s(i, j) : kNaN,
              moments ? moments->var_s(i, j) : kNaN);
      add("q" + qname, pi, pi * (1.0 - pi) / nn);
      break;
    }
    case ExperimentKind::MapEstimates: {
      for (std::size_t i = 0; i < p; ++i)
        add("mu" + std::to_string(i + 1), truth.mean(i), asym ? asym->mean[i] : kNaN);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j)
          add(pair_name("sigma", i, j), truth.covariance(i, j), asym ? asym->covariance(i, j) : kNaN);
      add("pi" + qname, pi, asym ? asym->probability[cfg.tracked_state] : kNaN);
      break;
    }
    case ExperimentKind::SigmaEstimates: {
      const GaugeLayout layout(p);
      for (std::size_t k = 0; k < layout.size(); ++k) {
        const auto [i, j] = layout.entry(k);
        add(pair_name("Sigma", i, j), canonical(i, j), asym ? asym->sigma_entries(i, j) : kNaN);
        out.back().alt_theory_mean = canonical_t(i, j);
      }
      break;
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const GrassmannBinary& truth, const ExperimentConfig& cfg) {
  const std::size_t p = truth.dim();
  if (cfg.trials == 0) throw Error(Errc::TooFewSamples, "experiment needs at least one trial");
  if (cfg.kind != ExperimentKind::Statistics && p < 1) {
    throw Error(Errc::EmptyIndexSet, "cannot fit a zero-dimensional model");
  }
  ExperimentResult result;
  result.kind = cfg.kind;

  const Matrix canonical = canonicalize_gauge(truth.sigma());
  const Matrix canonical_t = canonicalize_gauge(truth.sigma().transposed());
  std::mutex failure_mutex;

  for (std::size_t k = 0; k < cfg.sizes.size(); ++k) {
    const std::size_t n = cfg.sizes[k];
    if (n == 0) throw Error(Errc::TooFewSamples, "sample size must be positive");
    std::optional<AsymptoticVariances> asym;
    if (cfg.kind != ExperimentKind::Statistics) asym = map_asymptotic_variances(truth.sigma(), n);
    std::vector<Series> block = make_series(truth, cfg, n, asym, canonical, canonical_t);

    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
      SeededRng rng(cfg.seed + (static_cast<std::uint64_t>(k) << 32) + t);
      const Dataset data = sample(truth, n, rng);
      std::size_t col = 0;
      auto put = [&](double v) { block[col++].values[t] = v; };

      if (cfg.kind == ExperimentKind::Statistics) {
        const StatSummary stats = summarize(data);
        for (std::size_t i = 0; i < p; ++i) put(stats.means[i]);
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = i + 1; j < p; ++j) put(stats.covariances(i, j));
        put(stats.empirical[cfg.tracked_state]);
        return;
      }

      FitReport fit;
      bool usable = true;
      try {
        fit = fit_map(data, cfg.fit);
      } catch (const Error&) {
        usable = false;
      }
      if (!usable || !fit.converged) {
        std::lock_guard lock(failure_mutex);
        ++result.failed_fits;
      }
      // Non-converged fits keep their best-so-far moments; Sigma entries are dropped.
      if (!usable || (!fit.converged && cfg.kind == ExperimentKind::SigmaEstimates)) return;
      const Matrix& s = fit.sigma;
      if (cfg.kind == ExperimentKind::MapEstimates) {
        for (std::size_t i = 0; i < p; ++i) put(s(i, i));
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = i + 1; j < p; ++j) put(-s(i, j) * s(j, i));
        BuildOptions quick;
        quick.check = CheckMode::Never;
        put(GrassmannBinary::from_sigma(s, quick).joint_prob(cfg.tracked_state));
      } else {
        const GaugeLayout layout(p);
        for (std::size_t q = 0; q < layout.size(); ++q) {
          const auto [i, j] = layout.entry(q);
          put(s(i, j));
        }
      }
    });

    for (auto& s : block) result.series.push_back(std::move(s));
  }
  return result;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw Error(Errc::ParseError, "cannot write " + (dir / name).string());
    return out;
  };
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : io::format_double(v); };

  for (const auto& s : result.series) {
    auto out = open(s.label() + ".csv");
    out << "trial,value\n";
    for (std::size_t t = 0; t < s.values.size(); ++t) out << t << "," << num(s.values[t]) << "\n";
  }
  auto summary = open("summary.csv");
  summary << "statistic,mc_mean,mc_var,theory_mean,theory_var\n";
  for (const auto& s : result.series) {
    summary << s.label() << "," << num(mc_mean(s.values)) << "," << num(mc_variance(s.values)) << ","
            << num(s.theory_mean) << "," << num(s.theory_var) << "\n";
  }
  if (result.kind == ExperimentKind::SigmaEstimates) {
    auto truth = open("truth.csv");
    truth << "statistic,true,true_transposed\n";
    for (const auto& s : result.series) {
      truth << s.label() << "," << num(s.theory_mean) << "," << num(s.alt_theory_mean.value_or(kNaN))
            << "\n";
    }
  }
}

}  // namespace grassbin
