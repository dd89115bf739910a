#pragma once

#include <stdexcept>
#include <string>

namespace nhknot {

enum class ErrorKind {
  DefectiveMatrix,
  IllConditioned,
  ExceptionalPoint,
  InvalidMomentum,
  InvalidSweep,
  NonHermitian,
  PositivityLost,
  UnsupportedStructure,
  StepTooCoarse,
  SlowConvergence,
  InvalidBand,
  SingularCalibration,
  NoConvergence,
  EmptySubspace,
  NearDegenerate,
  Inconsistent,
  BranchJump,
  TrackingAmbiguous,
  NotPositive,
  OnBoundary,
  IncompleteGrid,
  InvalidEpsilon,
  DegenerateEmbedding,
  NonContiguous,
  InvalidConfig,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DefectiveMatrix: return "DefectiveMatrix";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::ExceptionalPoint: return "ExceptionalPoint";
    case ErrorKind::InvalidMomentum: return "InvalidMomentum";
    case ErrorKind::InvalidSweep: return "InvalidSweep";
    case ErrorKind::NonHermitian: return "NonHermitian";
    case ErrorKind::PositivityLost: return "PositivityLost";
    case ErrorKind::UnsupportedStructure: return "UnsupportedStructure";
    case ErrorKind::StepTooCoarse: return "StepTooCoarse";
    case ErrorKind::SlowConvergence: return "SlowConvergence";
    case ErrorKind::InvalidBand: return "InvalidBand";
    case ErrorKind::SingularCalibration: return "SingularCalibration";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EmptySubspace: return "EmptySubspace";
    case ErrorKind::NearDegenerate: return "NearDegenerate";
    case ErrorKind::Inconsistent: return "Inconsistent";
    case ErrorKind::BranchJump: return "BranchJump";
    case ErrorKind::TrackingAmbiguous: return "TrackingAmbiguous";
    case ErrorKind::NotPositive: return "NotPositive";
    case ErrorKind::OnBoundary: return "OnBoundary";
    case ErrorKind::IncompleteGrid: return "IncompleteGrid";
    case ErrorKind::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorKind::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::NonContiguous: return "NonContiguous";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Domain error. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error carrying a time value (positivity horizon or required decay time).
class TimedError : public Error {
 public:
  TimedError(ErrorKind kind, const std::string& what, double time)
      : Error(kind, what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace nhknot
