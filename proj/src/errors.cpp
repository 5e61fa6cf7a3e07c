#include "atlasdiffeo/errors.hpp"

#include <utility>

namespace atlasdiffeo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::MissingTransition: return "MissingTransition";
    case ErrorCode::LeftChartDomain: return "LeftChartDomain";
    case ErrorCode::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::OutsideInjectivityRadius: return "OutsideInjectivityRadius";
    case ErrorCode::DegenerateRegion: return "DegenerateRegion";
    case ErrorCode::SigmaOutOfRange: return "SigmaOutOfRange";
    case ErrorCode::DeltaTooLarge: return "DeltaTooLarge";
    case ErrorCode::SingularDifferential: return "SingularDifferential";
    case ErrorCode::OrderUnavailable: return "OrderUnavailable";
    case ErrorCode::NotSubordinate: return "NotSubordinate";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::MultiplierConditionUnverified: return "MultiplierConditionUnverified";
    case ErrorCode::CoverViolation: return "CoverViolation";
    case ErrorCode::ExplosionGuard: return "ExplosionGuard";
    case ErrorCode::ConstantsIncompatible: return "ConstantsIncompatible";
    case ErrorCode::ConstantsMissing: return "ConstantsMissing";
    case ErrorCode::NoContainingChart: return "NoContainingChart";
    case ErrorCode::GaugeViolation: return "GaugeViolation";
    case ErrorCode::LogDomainExceeded: return "LogDomainExceeded";
    case ErrorCode::NewtonFailure: return "NewtonFailure";
    case ErrorCode::OutsideTrustRegion: return "OutsideTrustRegion";
    case ErrorCode::RadiiOrderViolation: return "RadiiOrderViolation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

SyntaxError::SyntaxError(std::size_t position, const std::string& what)
    : Error(ErrorCode::SyntaxError, what + " at position " + std::to_string(position)),
      position_(position) {}

LeftChartDomain::LeftChartDomain(double t_exit)
    : Error(ErrorCode::LeftChartDomain, "geodesic left the chart domain at t=" + std::to_string(t_exit)),
      t_exit_(t_exit) {}

NoConvergence::NoConvergence(ErrorCode code, int iterations, const std::string& what)
    : Error(code, what + " after " + std::to_string(iterations) + " iterations"),
      iterations_(iterations) {}

namespace {
std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += "; ";
    out += v[i];
  }
  return out;
}
}  // namespace

InvariantViolation::InvariantViolation(std::vector<std::string> violations)
    : Error(ErrorCode::InvariantViolation, join(violations)), violations_(std::move(violations)) {}

}  // namespace atlasdiffeo
