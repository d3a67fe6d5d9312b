#pragma once

#include <stdexcept>
#include <string>

namespace cogemm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed documents, out-of-range arguments, broken invariants
// on user-supplied values. The CLI maps this family to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidConstraintError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptySpaceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class KernelInvalidError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateTrainingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace cogemm
