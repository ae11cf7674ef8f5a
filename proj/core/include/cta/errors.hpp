#pragma once

#include <stdexcept>
#include <string>

namespace cta {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value left the representable range (e.g. exp overflow).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A value is outside an operation's mathematical domain (e.g. a zero divisor).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A streaming state was used before it was warm.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid model / CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed file carrying unusable values (non-finite scalars).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A tensor required by the configuration is absent from a weight store.
class MissingTensorError : public ConfigError {
 public:
  explicit MissingTensorError(const std::string& name)
      : ConfigError("missing tensor '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace cta
