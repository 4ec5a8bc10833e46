#pragma once

#include <stdexcept>
#include <string>

namespace dpfedrep {

enum class ErrorCode {
  RankDeficient,
  DimensionMismatch,
  IllConditioned,
  BatchBudgetExceeded,
  MarginInfeasible,
  InfeasibleBudget,
  EmptyCandidateSet,
  TooFewSamples,
  CoverTooLarge,
  Diverged,
  InvalidArgument,
  Config,
  Io,
};

inline const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` tells numerical failures
/// apart from configuration and IO problems (the CLI maps them to exit codes).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the error-code prefix.
  const std::string& detail() const noexcept { return detail_; }

  bool is_config_error() const noexcept {
    return code_ == ErrorCode::Config || code_ == ErrorCode::InvalidArgument ||
           code_ == ErrorCode::BatchBudgetExceeded || code_ == ErrorCode::InfeasibleBudget ||
           code_ == ErrorCode::CoverTooLarge;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::BatchBudgetExceeded: return "BatchBudgetExceeded";
    case ErrorCode::MarginInfeasible: return "MarginInfeasible";
    case ErrorCode::InfeasibleBudget: return "InfeasibleBudget";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::CoverTooLarge: return "CoverTooLarge";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dpfedrep
