#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "grassbin/model.hpp"

namespace grassbin {

// Seedable generator with a recorded algorithm id. Streams derived with
// `stream(k)` are independent instances seeded from (seed, k).
class SeededRng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::string algorithm() const { return kAlgorithm; }
  SeededRng stream(std::uint64_t index) const { return SeededRng(seed_ + index); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

class Dataset {
 public:
  explicit Dataset(std::size_t p) : p_(p) {}

  std::size_t dim() const noexcept { return p_; }
  std::size_t size() const noexcept { return rows_.size(); }
  const std::vector<State>& rows() const noexcept { return rows_; }
  BinaryVector row(std::size_t n) const { return bits_of(rows_.at(n), p_); }
  // n_delta for every state seen at least once.
  const std::map<State, std::size_t>& counts() const noexcept { return counts_; }
  std::size_t count(State s) const;

  void add(State s);
  void add(std::span<const std::uint8_t> bits);

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t p_;
  std::vector<State> rows_;
  std::map<State, std::size_t> counts_;
};

inline constexpr double kConditionalMeanTolerance = 1e-9;

// Draws x_1, then each x_k from its closed-form conditional mean given the
// realized prefix x_1..x_{k-1}. Conditional means are memoized per prefix.
class ChainSampler {
 public:
  explicit ChainSampler(const GrassmannBinary& model);

  BinaryVector draw(SeededRng& rng);
  State draw_state(SeededRng& rng);
  // P(x_{k+1} = 1 | first k variables = prefix), clamped into [0, 1].
  double conditional_mean(std::size_t k, State prefix);

 private:
  double compute_mean(std::size_t k, State prefix) const;

  const GrassmannBinary* model_;
  bool memoize_;
  std::vector<std::vector<double>> cache_;  // cache_[k][prefix], NaN when unset
};

BinaryVector sample_one(const GrassmannBinary& model, SeededRng& rng);
Dataset sample(const GrassmannBinary& model, std::size_t n, SeededRng& rng);

}  // namespace grassbin
