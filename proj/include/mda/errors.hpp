#pragma once

#include <stdexcept>
#include <string>

namespace mda {

enum class ErrorKind {
  NotPositiveDefinite,
  SingularCholesky,
  NonpositiveDf,
  EmptyBox,
  EmptyInterval,
  InfeasibleStart,
  MissingHistory,
  ImproperPosterior,
  UnknownArm,
  PreconditionViolated,
  NonfiniteLogPhi,
  Config,
  Data,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library. `kind()` lets callers (and the CLI's
/// exit-code mapping) branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Posterior for the regression at `visit` (1-based) is not proper.
class ImproperPosterior : public Error {
 public:
  ImproperPosterior(int visit, const std::string& what)
      : Error(ErrorKind::ImproperPosterior, what), visit_(visit) {}
  int visit() const noexcept { return visit_; }

 private:
  int visit_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularCholesky: return "SingularCholesky";
    case ErrorKind::NonpositiveDf: return "NonpositiveDf";
    case ErrorKind::EmptyBox: return "EmptyBox";
    case ErrorKind::EmptyInterval: return "EmptyInterval";
    case ErrorKind::InfeasibleStart: return "InfeasibleStart";
    case ErrorKind::MissingHistory: return "MissingHistory";
    case ErrorKind::ImproperPosterior: return "ImproperPosterior";
    case ErrorKind::UnknownArm: return "UnknownArm";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::NonfiniteLogPhi: return "NonfiniteLogPhi";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Data: return "Data";
  }
  return "Unknown";
}

}  // namespace mda
