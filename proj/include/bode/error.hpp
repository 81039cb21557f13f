#pragma once

#include <stdexcept>
#include <string>

namespace bode {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite could not be factorized.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing an artifact failed.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace bode
