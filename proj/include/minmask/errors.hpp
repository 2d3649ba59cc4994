#pragma once

#include <stdexcept>
#include <string>

namespace minmask {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input whose shape does not match what the operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The network cannot be handled (e.g. first parameterized layer is not affine).
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

/// Problem kind the solver does not accept (non-linear constraints).
class UnsupportedProblem : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or text. `location` is a byte offset, line, or JSON path.
class ParseError : public Error {
 public:
  ParseError(std::string location, const std::string& message)
      : Error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

}  // namespace minmask
