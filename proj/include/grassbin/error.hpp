#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace grassbin {

enum class Errc {
  SingularMatrix,
  SingularBlock,
  SingularSigma,
  IndexOutOfRange,
  DimensionMismatch,
  DimensionTooLarge,
  EmptyIndexSet,
  MeanOutOfRange,
  InvalidModel,
  ZeroEvidence,
  SameIndex,
  ObservedIndex,
  InvalidConditionalMean,
  TooFewSamples,
  InfeasibleTarget,
  NonConvergence,
  NonPositiveProbability,
  ParseError,
};

const char* errc_name(Errc code) noexcept;

// All library failures surface as this exception. `detail` carries the
// offending index / subset when one exists (0-based).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::vector<std::size_t> detail = {})
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::vector<std::size_t>& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::vector<std::size_t> detail_;
};

}  // namespace grassbin
