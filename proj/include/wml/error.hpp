#pragma once

#include <stdexcept>
#include <string>

namespace wml {

enum class ErrorKind {
  InvalidInput,
  DomainInvalid,
  GeometricAmbiguity,
  MeshQuality,
  MorseViolation,
  MorseSmaleViolation,
  Configuration,
  ContractViolation,
  Resolution,
  ComplexInconsistency,
  IntegrationFailure,
  Overflow,
  SolverNonConvergence,
  Io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for errors that are raised before any heavy numerical work.
  bool is_configuration() const noexcept;

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace wml
