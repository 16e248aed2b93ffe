//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_ERROR_H_
#define MADGEN_ERROR_H_

#include <stdexcept>
#include <string>

namespace madgen {

// Errors caused by the caller's data or configuration derive from UserError;
// the CLI maps them to exit code 2. Anything else is an internal failure.
class UserError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError: public UserError {
public:
  using UserError::UserError;
};

class ValenceError: public UserError {
public:
  using UserError::UserError;
};

class UnsupportedFeatureError: public UserError {
public:
  using UserError::UserError;
};

class CompositionError: public UserError {
public:
  using UserError::UserError;
};

class FormatError: public UserError {
public:
  using UserError::UserError;
};

class MissingFieldError: public UserError {
public:
  using UserError::UserError;
};

class EmptySpectrumError: public UserError {
public:
  using UserError::UserError;
};

class ZeroVectorError: public UserError {
public:
  using UserError::UserError;
};

class ShapeError: public UserError {
public:
  using UserError::UserError;
};

class ConfigError: public UserError {
public:
  using UserError::UserError;
};

class EmptyPoolError: public UserError {
public:
  using UserError::UserError;
};

class MissingRecordError: public UserError {
public:
  using UserError::UserError;
};

class DataError: public UserError {
public:
  using UserError::UserError;
};

class InsufficientScaffoldsError: public UserError {
public:
  using UserError::UserError;
};

// Raised when the unconditional branch of a generator is queried although it
// was never trained (condition dropout was zero).
class UncalibratedError: public UserError {
public:
  using UserError::UserError;
};

}  // namespace madgen

#endif  // MADGEN_ERROR_H_
