#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

enum class ErrorCode {
  SyntaxError,
  UnknownIdentifier,
  ArityError,
  ParseError,
  InvariantViolation,
  MissingTransition,
  LeftChartDomain,
  StepSizeUnderflow,
  NoConvergence,
  OutsideInjectivityRadius,
  DegenerateRegion,
  SigmaOutOfRange,
  DeltaTooLarge,
  SingularDifferential,
  OrderUnavailable,
  NotSubordinate,
  EmptyIntersection,
  MultiplierConditionUnverified,
  CoverViolation,
  ExplosionGuard,
  ConstantsIncompatible,
  ConstantsMissing,
  NoContainingChart,
  GaugeViolation,
  LogDomainExceeded,
  NewtonFailure,
  OutsideTrustRegion,
  RadiiOrderViolation,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& what);
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class LeftChartDomain : public Error {
 public:
  explicit LeftChartDomain(double t_exit);
  double t_exit() const noexcept { return t_exit_; }

 private:
  double t_exit_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(ErrorCode code, int iterations, const std::string& what);
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

class InvariantViolation : public Error {
 public:
  explicit InvariantViolation(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace atlasdiffeo
