// grassbin: validate, sample, fit and query Grassmann binary models.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grassbin/error.hpp"
#include "grassbin/estimation.hpp"
#include "grassbin/experiment.hpp"
#include "grassbin/io.hpp"
#include "grassbin/model.hpp"
#include "grassbin/sampler.hpp"

using namespace grassbin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNonConvergence = 3;

struct Globals {
  bool strict = false;
  std::size_t max_p = kDefaultEnumerationCap;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string one_based(const IndexSet& s) {
  std::string out = "{";
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? "," : "") + std::to_string(s[k] + 1);
  return out + "}";
}

void print_matrix(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << "  ";
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << num(m(i, j));
    out << "\n";
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_index(const std::string& s, std::size_t p) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    throw UsageError("not an index: '" + s + "'");
  }
  if (pos != s.size() || v < 1 || v > p) {
    throw UsageError("index '" + s + "' outside 1.." + std::to_string(p));
  }
  return v - 1;
}

// "key=value" -> value, requiring the key.
std::string value_of(const std::string& arg, const std::string& key) {
  const std::string prefix = key + "=";
  if (arg.rfind(prefix, 0) != 0) throw UsageError("expected " + prefix + "..., got '" + arg + "'");
  return arg.substr(prefix.size());
}

IndexSet parse_index_set(const std::string& list, std::size_t p) {
  std::vector<std::size_t> idx;
  for (const auto& f : split(list, ',')) idx.push_back(parse_index(f, p));
  return IndexSet::from_unsorted(std::move(idx));
}

// "2:1,4:0"
Observation parse_observation(const std::string& list, std::size_t p) {
  Observation obs;
  for (const auto& f : split(list, ',')) {
    const auto colon = f.find(':');
    if (colon == std::string::npos) throw UsageError("observation '" + f + "' must be index:bit");
    const std::size_t i = parse_index(f.substr(0, colon), p);
    const std::string bit = f.substr(colon + 1);
    if (bit != "0" && bit != "1") throw UsageError("observation '" + f + "': bit must be 0 or 1");
    if (obs.observes(i)) throw UsageError("variable " + std::to_string(i + 1) + " observed twice");
    obs.set(i, bit == "1" ? 1 : 0);
  }
  return obs;
}

BinaryVector parse_bits(const std::string& list, std::size_t p) {
  std::string digits;
  for (char c : list) {
    if (c == ',') continue;
    if (c != '0' && c != '1') throw UsageError("state '" + list + "' must contain only 0/1");
    digits += c;
  }
  if (digits.size() != p) {
    throw UsageError("state '" + list + "' has " + std::to_string(digits.size()) +
                     " bits, model has p = " + std::to_string(p));
  }
  BinaryVector x(p);
  for (std::size_t i = 0; i < p; ++i) x[i] = digits[i] == '1';
  return x;
}

BuildOptions build_options(const Globals& g, CheckMode mode = CheckMode::Auto) {
  BuildOptions o;
  o.check = mode;
  o.strict = g.strict;
  o.max_p = g.max_p;
  return o;
}

GrassmannBinary load(const std::string& path, const Globals& g, CheckMode mode = CheckMode::Auto) {
  return GrassmannBinary::from_sigma(io::load_model(path).sigma, build_options(g, mode));
}

void print_table(std::ostream& out, const GrassmannBinary& d) {
  const auto table = d.joint_table();
  out << "state,probability\n";
  for (State s = 0; s < table.size(); ++s) out << state_label(s, d.dim()) << "," << num(table[s]) << "\n";
}

int cmd_validate(const std::string& path, const Globals& g) {
  const auto d = load(path, Globals{false, g.max_p}, CheckMode::Always);
  const std::size_t p = d.dim();
  std::cout << "p: " << p << "\nmeans:";
  for (std::size_t i = 0; i < p; ++i) std::cout << " " << num(d.mean(i));
  std::cout << "\ncovariance:\n";
  Matrix cov(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) cov(i, j) = d.covariance(i, j);
  print_matrix(std::cout, cov);
  const auto& v = d.validity();
  std::cout << "min joint probability: " << num(v.min_probability) << "\n";
  if (d.valid()) {
    std::cout << "P0: yes" << (v.has_zero_states ? " (some states have zero probability)" : "")
              << "\nvalid\n";
    return kExitOk;
  }
  std::cout << "P0: no, witness B = " << (v.witness ? one_based(*v.witness) : "{}") << "\ninvalid\n";
  return kExitInvalid;
}

int cmd_sample(const std::string& model_path, std::size_t n, std::uint64_t seed,
               const std::string& out_path, const Globals& g) {
  const auto file = io::load_model(model_path);
  const auto d = GrassmannBinary::from_sigma(file.sigma, build_options(g));
  SeededRng rng(seed);
  const Dataset data = sample(d, n, rng);
  const std::vector<std::string> comments{
      "seed=" + std::to_string(seed),
      std::string("rng=") + SeededRng::kAlgorithm,
      "model=" + io::model_hash(file.sigma),
  };
  if (out_path.empty()) {
    io::write_dataset(std::cout, data, comments);
  } else {
    std::ofstream out(out_path);
    if (!out) throw UsageError("cannot write " + out_path);
    io::write_dataset(out, data, comments);
  }
  return kExitOk;
}

int cmd_fit(const std::string& data_path, const FitConfig& config, const std::string& out_path) {
  const Dataset data = io::load_dataset(data_path);
  const FitReport r = fit_map(data, config);
  std::cout << "N: " << data.size() << "\np: " << data.dim() << "\nstart: " << r.start
            << "\niterations: " << r.iterations << "\nconverged: " << (r.converged ? "yes" : "no")
            << "\ngradient max-norm: " << num(r.gradient_norm)
            << "\nhessian fallbacks: " << r.hessian_fallbacks
            << "\nlog posterior: " << num(r.log_posterior) << "\n";
  if (r.multistart_spread) std::cout << "multistart spread: " << num(*r.multistart_spread) << "\n";
  std::cout << "sigma:\n";
  print_matrix(std::cout, r.sigma);
  if (!out_path.empty()) {
    io::ModelFile file{r.sigma};
    file.meta = {{"gamma", config.gamma},
                 {"n", data.size()},
                 {"iterations", r.iterations},
                 {"converged", r.converged},
                 {"log_posterior", r.log_posterior}};
    io::save_model(out_path, file);
  }
  return r.converged ? kExitOk : kExitNonConvergence;
}

int cmd_query(const std::string& model_path, const std::vector<std::string>& args, const Globals& g) {
  if (args.empty()) throw UsageError("query needs a kind: joint, marginal, conditional, moment, pcorr, entropy");
  const auto d = load(model_path, g);
  const std::size_t p = d.dim();
  const std::string& kind = args[0];
  auto need = [&](std::size_t count) {
    if (args.size() != count + 1) {
      throw UsageError("query " + kind + " takes " + std::to_string(count) + " argument(s)");
    }
  };

  if (kind == "joint") {
    need(1);
    std::cout << num(d.joint_prob(parse_bits(value_of(args[1], "x"), p))) << "\n";
  } else if (kind == "marginal") {
    need(1);
    const IndexSet keep = parse_index_set(value_of(args[1], "keep"), p);
    const auto m = d.marginal(keep);
    std::cout << "variables: " << one_based(keep) << "\nsigma:\n";
    print_matrix(std::cout, m.sigma());
    print_table(std::cout, m);
  } else if (kind == "conditional") {
    need(1);
    const Observation obs = parse_observation(value_of(args[1], "obs"), p);
    const auto c = d.conditional(obs);
    std::cout << "evidence: " << num(c.evidence) << "\nremaining: " << one_based(c.remaining)
              << "\nmeans:";
    for (std::size_t k = 0; k < c.remaining.size(); ++k) std::cout << " " << num(c.model.mean(k));
    std::cout << "\nsigma:\n";
    print_matrix(std::cout, c.model.sigma());
    if (c.model.dim() > 0) print_table(std::cout, c.model);
  } else if (kind == "moment") {
    need(1);
    std::cout << num(d.central_moment(parse_index_set(value_of(args[1], "r"), p))) << "\n";
  } else if (kind == "pcorr") {
    if (args.size() != 2 && args.size() != 3) throw UsageError("query pcorr takes i,j [obs=...]");
    const auto ij = split(args[1], ',');
    if (ij.size() != 2) throw UsageError("pcorr expects two indices i,j");
    const Observation obs =
        args.size() == 3 ? parse_observation(value_of(args[2], "obs"), p) : Observation{};
    std::cout << num(d.partial_correlation(parse_index(ij[0], p), parse_index(ij[1], p), obs)) << "\n";
  } else if (kind == "entropy") {
    need(0);
    std::cout << num(d.entropy()) << "\n";
  } else {
    throw UsageError("unknown query '" + kind + "'");
  }
  return kExitOk;
}

int cmd_experiment(const std::string& name, std::optional<std::size_t> m,
                   const std::vector<std::size_t>& sizes, std::uint64_t seed, const std::string& out,
                   std::size_t threads, double gamma) {
  const auto kind = parse_experiment_kind(name);
  if (!kind) throw UsageError("unknown experiment '" + name + "'");
  ExperimentConfig config = ExperimentConfig::defaults(*kind);
  if (m) config.trials = *m;
  if (!sizes.empty()) config.sizes = sizes;
  config.seed = seed;
  config.threads = threads;
  config.fit.gamma = gamma;
  const ExperimentResult result = run_experiment(reference_model(), config);
  write_experiment(result, out);
  std::cout << "experiment: " << name << "\ntrials: " << config.trials << "\nseed: " << seed
            << "\nfailed fits: " << result.failed_fits << "\n";
  std::cout << "statistic,mc_mean,mc_var,theory_mean,theory_var\n";
  for (const auto& s : result.series) {
    std::cout << s.label() << "," << num(mc_mean(s.values)) << "," << num(mc_variance(s.values)) << ","
              << num(s.theory_mean) << "," << num(s.theory_var) << "\n";
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::InvalidModel:
    case Errc::InvalidConditionalMean:
    case Errc::NonPositiveProbability:
    case Errc::MeanOutOfRange:
    case Errc::SingularSigma:
      return kExitInvalid;
    case Errc::NonConvergence:
      return kExitNonConvergence;
    default:
      return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grassmann binary distributions"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--strict", g.strict, "Reject invalid models at load time");
  app.add_option("--max-p", g.max_p, "Exhaustive enumeration cap")->check(CLI::Range(1, 62));

  std::string model_path, data_path, out_path;
  std::size_t n = 0;
  std::uint64_t seed = 1;

  auto* validate = app.add_subcommand("validate", "Check a model file for validity");
  validate->add_option("--model,model", model_path, "Model file")->required();

  auto* sample_cmd = app.add_subcommand("sample", "Draw a dataset from a model");
  sample_cmd->add_option("--model", model_path, "Model file")->required();
  sample_cmd->add_option("--n", n, "Number of rows")->required();
  sample_cmd->add_option("--seed", seed, "RNG seed");
  sample_cmd->add_option("--out", out_path, "Output CSV (default stdout)");

  FitConfig fit_config;
  std::size_t max_iters = fit_config.max_newton_iters;
  auto* fit = app.add_subcommand("fit", "MAP estimate of Sigma from a dataset");
  fit->add_option("--data", data_path, "Dataset CSV")->required();
  fit->add_option("--gamma", fit_config.gamma, "Dirichlet pseudo-count")->capture_default_str();
  fit->add_option("--out", out_path, "Write the fitted model here");
  fit->add_option("--max-iters", max_iters, "Newton iteration limit")->capture_default_str();
  fit->add_flag("--multistart", fit_config.multistart, "Also run alternative starting points");

  std::vector<std::string> query_args;
  auto* query = app.add_subcommand("query", "Closed-form queries on a model");
  query->add_option("--model", model_path, "Model file")->required();
  query->add_option("query", query_args,
                    "joint x=1,0,1 | marginal keep=1,3 | conditional obs=2:1,4:0 | moment r=1,3 | "
                    "pcorr i,j [obs=...] | entropy")
      ->required();

  std::string experiment_kind;
  std::optional<std::size_t> trials;
  std::vector<std::size_t> sizes;
  std::size_t threads = 0;
  double experiment_gamma = FitConfig{}.gamma;
  std::uint64_t experiment_seed = ExperimentConfig{}.seed;
  auto* experiment = app.add_subcommand("experiment", "Monte Carlo sampling-distribution experiments");
  experiment->add_option("name", experiment_kind, "statistics | map-estimates | sigma-estimates")
      ->required();
  experiment->add_option("--m", trials, "Trials per sample size");
  experiment->add_option("--n", sizes, "Sample sizes")->delimiter(',');
  experiment->add_option("--seed", experiment_seed, "Base seed")->capture_default_str();
  experiment->add_option("--out", out_path, "Output directory")->required();
  experiment->add_option("--threads", threads, "Worker threads (0: all cores)");
  experiment->add_option("--gamma", experiment_gamma, "Dirichlet pseudo-count for fits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(model_path, g);
    if (*sample_cmd) return cmd_sample(model_path, n, seed, out_path, g);
    if (*fit) {
      fit_config.max_newton_iters = max_iters;
      fit_config.max_p = g.max_p;
      return cmd_fit(data_path, fit_config, out_path);
    }
    if (*query) return cmd_query(model_path, query_args, g);
    if (*experiment) {
      return cmd_experiment(experiment_kind, trials, sizes, experiment_seed, out_path, threads,
                            experiment_gamma);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.detail().empty()) {
      std::cerr << "  at:";
      for (auto i : e.detail()) std::cerr << " " << i + 1;
      std::cerr << "\n";
    }
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
