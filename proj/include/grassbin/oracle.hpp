#pragma once

// Reference computations by exhaustive enumeration of all 2^p states. Used
// as ground truth for the closed-form queries on GrassmannBinary.

#include <cstddef>
#include <functional>
#include <vector>

#include "grassbin/matrix.hpp"
#include "grassbin/model.hpp"

namespace grassbin::oracle {

struct Table {
  std::size_t p = 0;
  std::vector<double> probs;  // indexed by State

  double operator[](State s) const { return probs[s]; }
  double sum() const;
  double min() const;
};

// Each state evaluated independently as the determinant of the Sigma block
// form: diagonal Sigma_ii or 1 - Sigma_ii, columns of zero-valued variables
// negated off the diagonal.
Table oracle_table(const GrassmannBinary& d, std::size_t cap = kDefaultEnumerationCap);
double block_form_probability(const Matrix& sigma, State state);

// Sum over the variables not in `keep`; result is indexed by position in keep.
Table oracle_marginal(const Table& t, const IndexSet& keep);

struct ConditionalTable {
  Table table;  // over the unobserved variables, by position
  double evidence = 0.0;
};
ConditionalTable oracle_conditional(const Table& t, const Observation& obs);

// sum_s f(s) * pi_s
double oracle_moment(const Table& t, const std::function<double(State)>& f);
// E[prod_{i in r} (x_i - E x_i)] with the means taken from the table itself.
double oracle_central_moment(const Table& t, const IndexSet& r);
double oracle_mean(const Table& t, std::size_t i);
double oracle_covariance(const Table& t, std::size_t i, std::size_t j);
double oracle_pearson(const Table& t, std::size_t i, std::size_t j);
double oracle_entropy(const Table& t);

}  // namespace grassbin::oracle
