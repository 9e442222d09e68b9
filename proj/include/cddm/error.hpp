#ifndef CDDM_ERROR_HPP_
#define CDDM_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cddm {

// Root of the library's exception hierarchy. The CLI maps each branch to an
// exit code (see tools/cddm.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, bad configuration, violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Non-finite values or a numerical kernel that could not produce a result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Misuse of a stateful object, e.g. consuming a candidate twice.
class StateError : public Error {
 public:
  using Error::Error;
};

class ModelFileError : public DataError {
 public:
  using DataError::DataError;
};

class ModelVersionError : public ModelFileError {
 public:
  using ModelFileError::ModelFileError;
};

class ModelTruncatedError : public ModelFileError {
 public:
  using ModelFileError::ModelFileError;
};

class ModelNonFiniteError : public ModelFileError {
 public:
  using ModelFileError::ModelFileError;
};

}  // namespace cddm

#endif  // CDDM_ERROR_HPP_
