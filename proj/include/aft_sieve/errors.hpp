#pragma once

#include <stdexcept>
#include <string>

namespace aft {

// Process exit codes used by the command-line tool.
enum class ErrorCode : int {
  usage = 2,
  data_validation = 3,
  non_convergence = 4,
  numerical = 5,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return "E_USAGE";
    case ErrorCode::data_validation: return "E_DATA";
    case ErrorCode::non_convergence: return "E_CONVERGENCE";
    case ErrorCode::numerical: return "E_NUMERICAL";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Bad arguments or configuration.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::usage, what) {}
};

/// Input data violates a model requirement (bad status value, dimension mismatch, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCode::data_validation, what) {}
};

/// Evaluation point outside the spline / likelihood domain.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};

/// Non-finite values, failed integrations, singular systems.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};

}  // namespace aft
