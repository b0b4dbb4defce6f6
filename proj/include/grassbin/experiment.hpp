#pragma once

// Monte Carlo harness for sampling distributions of statistics and MAP
// estimates under a fixed five-variable reference model.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "grassbin/estimation.hpp"
#include "grassbin/model.hpp"

namespace grassbin {

// mu = (0.77, 0.37, 0.67, 0.42, 0.7) with the fixed pairwise correlations.
MomentTarget reference_target();
// Maximum-entropy model for reference_target().
const GrassmannBinary& reference_model();
// State (1,1,0,0,1).
inline constexpr State kReferenceState = 0b10011;

enum class ExperimentKind { Statistics, MapEstimates, SigmaEstimates };

std::optional<ExperimentKind> parse_experiment_kind(const std::string& name);
std::string experiment_name(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Statistics;
  std::size_t trials = 5000;
  std::vector<std::size_t> sizes{50, 200, 500};
  std::uint64_t seed = 20240601;
  State tracked_state = kReferenceState;
  FitConfig fit;
  std::size_t threads = 0;  // 0: hardware concurrency

  static ExperimentConfig defaults(ExperimentKind kind);
};

struct Series {
  std::string name;  // e.g. "xbar5", "s13", "q11001", "mu5", "Sigma23"
  std::size_t n = 0;
  std::vector<double> values;  // one per trial; NaN for failed fits
  double theory_mean = 0.0;
  double theory_var = 0.0;
  // Sigma entries only: the value under the transposed representative.
  std::optional<double> alt_theory_mean;

  std::string label() const { return name + "_N" + std::to_string(n); }
};

struct ExperimentResult {
  ExperimentKind kind{};
  std::vector<Series> series;
  std::size_t failed_fits = 0;  // not converged or threw

  const Series* find(const std::string& name, std::size_t n) const;
};

// Trial t at size index k uses SeededRng(seed + (k << 32) + t).
ExperimentResult run_experiment(const GrassmannBinary& truth, const ExperimentConfig& config);
// One "<label>.csv" (trial,value) per series plus summary.csv.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

// Summary helpers; NaN entries are skipped.
double mc_mean(std::span<const double> v);
double mc_variance(std::span<const double> v);  // unbiased; NaN below 2 values
double mc_skewness(std::span<const double> v);

std::string state_label(State s, std::size_t p);

template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next++; i < count; i = next++) body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = count;
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace grassbin
