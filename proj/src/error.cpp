#include "cpshrink/error.hpp"

#include <iostream>
#include <mutex>

namespace cpshrink {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::InvalidPartition: return "InvalidPartition";
    case ErrorCode::SegmentRankDeficient: return "SegmentRankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularConstraintGram: return "SingularConstraintGram";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::GammaSingular: return "GammaSingular";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::MismatchedPartitions: return "MismatchedPartitions";
    case ErrorCode::DivergentMoment: return "DivergentMoment";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SingularFactorization: return "SingularFactorization";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  WarningHandler previous = std::move(handler_slot());
  handler_slot() = handler ? std::move(handler) : [](std::string_view) {};
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  handler_slot()(message);
}

}  // namespace cpshrink
