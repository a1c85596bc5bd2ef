#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cpshrink {

enum class ErrorCode {
  InvalidData,
  InvalidPartition,
  SegmentRankDeficient,
  DimensionMismatch,
  SingularConstraintGram,
  InfeasibleConfig,
  BudgetExceeded,
  GammaSingular,
  KTooSmall,
  MismatchedPartitions,
  DivergentMoment,
  NonConvergence,
  SingularFactorization,
  InvalidArgument,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Numerical warnings (clipped eigenvalues, ill-conditioned inverses). The
// default handler writes to stderr; simulations install a silent one.
using WarningHandler = std::function<void(std::string_view)>;
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler handler)
      : previous_(set_warning_handler(std::move(handler))) {}
  ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler previous_;
};

}  // namespace cpshrink
