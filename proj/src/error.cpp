#include "wml/error.hpp"

namespace wml {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::DomainInvalid: return "DomainInvalid";
    case ErrorKind::GeometricAmbiguity: return "GeometricAmbiguity";
    case ErrorKind::MeshQuality: return "MeshQuality";
    case ErrorKind::MorseViolation: return "MorseViolation";
    case ErrorKind::MorseSmaleViolation: return "MorseSmaleViolation";
    case ErrorKind::Configuration: return "ConfigurationError";
    case ErrorKind::ContractViolation: return "ContractViolation";
    case ErrorKind::Resolution: return "ResolutionError";
    case ErrorKind::ComplexInconsistency: return "ComplexInconsistency";
    case ErrorKind::IntegrationFailure: return "IntegrationFailure";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::SolverNonConvergence: return "SolverNonConvergence";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

bool Error::is_configuration() const noexcept {
  switch (kind_) {
    case ErrorKind::InvalidInput:
    case ErrorKind::DomainInvalid:
    case ErrorKind::Configuration:
    case ErrorKind::ContractViolation:
    case ErrorKind::MorseViolation:
    case ErrorKind::Io:
      return true;
    default:
      return false;
  }
}

}  // namespace wml
