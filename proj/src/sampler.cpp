#include "grassbin/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "grassbin/error.hpp"

namespace grassbin {

std::size_t Dataset::count(State s) const {
  const auto it = counts_.find(s);
  return it == counts_.end() ? 0 : it->second;
}

void Dataset::add(State s) {
  if (p_ < 64 && (s >> p_) != 0) throw Error(Errc::DimensionMismatch, "state wider than dataset");
  rows_.push_back(s);
  ++counts_[s];
}

void Dataset::add(std::span<const std::uint8_t> bits) {
  if (bits.size() != p_) throw Error(Errc::DimensionMismatch, "row length differs from dataset");
  add(state_of(bits));
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kMemoLimit = 16;
}

ChainSampler::ChainSampler(const GrassmannBinary& model)
    : model_(&model), memoize_(model.dim() <= kMemoLimit) {
  if (memoize_) {
    cache_.resize(model.dim());
    for (std::size_t k = 0; k < model.dim(); ++k) {
      cache_[k].assign(std::size_t{1} << k, std::numeric_limits<double>::quiet_NaN());
    }
  }
}

double ChainSampler::compute_mean(std::size_t k, State prefix) const {
  const Matrix& sigma = model_->sigma();
  if (k == 0) return sigma(0, 0);

  // Recoded prefix block: diagonal Sigma_ii or 1 - Sigma_ii, columns of
  // zero-valued variables negated.
  Matrix block(k, k);
  std::vector<double> sign(k);
  for (std::size_t j = 0; j < k; ++j) sign[j] = ((prefix >> j) & 1u) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) {
        block(i, i) = sign[i] > 0 ? sigma(i, i) : 1.0 - sigma(i, i);
      } else {
        block(i, j) = sign[j] * sigma(i, j);
      }
    }
  }
  const LuDecomposition lu(block);
  if (lu.singular()) {
    throw Error(Errc::ZeroEvidence,
                "prefix before variable " + std::to_string(k + 1) + " has zero probability", {k});
  }
  std::vector<double> rhs(k);
  for (std::size_t i = 0; i < k; ++i) rhs[i] = sigma(i, k);
  const auto y = lu.solve(rhs);
  double mean = sigma(k, k);
  for (std::size_t j = 0; j < k; ++j) mean -= sign[j] * sigma(k, j) * y[j];
  return mean;
}

double ChainSampler::conditional_mean(std::size_t k, State prefix) {
  double mean;
  if (memoize_) {
    double& slot = cache_[k][prefix];
    if (std::isnan(slot)) slot = compute_mean(k, prefix);
    mean = slot;
  } else {
    mean = compute_mean(k, prefix);
  }
  if (mean < -kConditionalMeanTolerance || mean > 1.0 + kConditionalMeanTolerance ||
      !std::isfinite(mean)) {
    throw Error(Errc::InvalidConditionalMean,
                "conditional mean of x" + std::to_string(k + 1) + " is " + std::to_string(mean),
                {k});
  }
  return std::clamp(mean, 0.0, 1.0);
}

State ChainSampler::draw_state(SeededRng& rng) {
  State s = 0;
  for (std::size_t k = 0; k < model_->dim(); ++k) {
    const double mean = conditional_mean(k, s);
    if (rng.uniform() < mean) s |= State{1} << k;
  }
  return s;
}

BinaryVector ChainSampler::draw(SeededRng& rng) { return bits_of(draw_state(rng), model_->dim()); }

BinaryVector sample_one(const GrassmannBinary& model, SeededRng& rng) {
  ChainSampler sampler(model);
  return sampler.draw(rng);
}

Dataset sample(const GrassmannBinary& model, std::size_t n, SeededRng& rng) {
  ChainSampler sampler(model);
  Dataset data(model.dim());
  for (std::size_t i = 0; i < n; ++i) data.add(sampler.draw_state(rng));
  return data;
}

}  // namespace grassbin
