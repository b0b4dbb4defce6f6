#include "grassbin/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grassbin/error.hpp"

namespace grassbin::oracle {

double Table::sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

double Table::min() const { return *std::min_element(probs.begin(), probs.end()); }

double block_form_probability(const Matrix& sigma, State state) {
  const std::size_t p = sigma.rows();
  Matrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const bool xi = (state >> i) & 1u;
    for (std::size_t j = 0; j < p; ++j) {
      const bool xj = (state >> j) & 1u;
      if (i == j) {
        m(i, i) = xi ? sigma(i, i) : 1.0 - sigma(i, i);
      } else {
        m(i, j) = xj ? sigma(i, j) : -sigma(i, j);
      }
    }
  }
  return determinant(m);
}

Table oracle_table(const GrassmannBinary& d, std::size_t cap) {
  check_enumeration_cap(d.dim(), cap);
  Table t{d.dim(), std::vector<double>(State{1} << d.dim())};
  for (State s = 0; s < t.probs.size(); ++s) t.probs[s] = block_form_probability(d.sigma(), s);
  return t;
}

namespace {
State gather(State s, const IndexSet& positions) {
  State out = 0;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if ((s >> positions[k]) & 1u) out |= State{1} << k;
  }
  return out;
}
}  // namespace

Table oracle_marginal(const Table& t, const IndexSet& keep) {
  keep.check_within(t.p);
  Table out{keep.size(), std::vector<double>(State{1} << keep.size(), 0.0)};
  for (State s = 0; s < t.probs.size(); ++s) out.probs[gather(s, keep)] += t.probs[s];
  return out;
}

ConditionalTable oracle_conditional(const Table& t, const Observation& obs) {
  obs.check_within(t.p);
  const IndexSet rest = obs.remaining(t.p);
  ConditionalTable out{{rest.size(), std::vector<double>(State{1} << rest.size(), 0.0)}, 0.0};
  for (State s = 0; s < t.probs.size(); ++s) {
    bool match = true;
    for (const auto& [i, bit] : obs.assignments()) {
      if (static_cast<int>((s >> i) & 1u) != bit) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    out.table.probs[gather(s, rest)] += t.probs[s];
    out.evidence += t.probs[s];
  }
  if (std::abs(out.evidence) < 1e-300) {
    throw Error(Errc::ZeroEvidence, "observation has zero probability");
  }
  for (double& v : out.table.probs) v /= out.evidence;
  return out;
}

double oracle_moment(const Table& t, const std::function<double(State)>& f) {
  double acc = 0.0;
  for (State s = 0; s < t.probs.size(); ++s) acc += f(s) * t.probs[s];
  return acc;
}

double oracle_mean(const Table& t, std::size_t i) {
  return oracle_moment(t, [i](State s) { return static_cast<double>((s >> i) & 1u); });
}

double oracle_central_moment(const Table& t, const IndexSet& r) {
  r.check_within(t.p);
  std::vector<double> mu;
  for (std::size_t i : r) mu.push_back(oracle_mean(t, i));
  return oracle_moment(t, [&](State s) {
    double prod = 1.0;
    for (std::size_t k = 0; k < r.size(); ++k) prod *= static_cast<double>((s >> r[k]) & 1u) - mu[k];
    return prod;
  });
}

double oracle_covariance(const Table& t, std::size_t i, std::size_t j) {
  if (i == j) {
    const double m = oracle_mean(t, i);
    return m * (1.0 - m);
  }
  return oracle_central_moment(t, IndexSet::from_unsorted({i, j}));
}

double oracle_pearson(const Table& t, std::size_t i, std::size_t j) {
  return oracle_covariance(t, i, j) /
         std::sqrt(oracle_covariance(t, i, i) * oracle_covariance(t, j, j));
}

double oracle_entropy(const Table& t) {
  double h = 0.0;
  for (double v : t.probs)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace grassbin::oracle
