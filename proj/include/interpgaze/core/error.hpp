#pragma once

#include <stdexcept>
#include <string>

namespace interpgaze {

/// Base class for every error raised by the library. The CLI maps each
/// subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad angle, bad config value).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside an allowed numeric range (e.g. v above v_max).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// The analytic gaze oracle could not find an iris in the patch.
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion or pair sampling failed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss term or weight became NaN/Inf.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string term, const std::string& what)
      : Error(what), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Reading or writing checkpoints, images or manifests failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace interpgaze
