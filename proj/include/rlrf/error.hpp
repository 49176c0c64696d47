#pragma once

#include <stdexcept>
#include <string>

namespace rlrf {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ComponentMismatch : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class MissingGroundTruth : public Error {
 public:
  MissingGroundTruth() : Error("length reward requires a ground-truth token count") {}
};

class RenderError : public Error {
 public:
  enum class Kind { parse, unsupported };

  RenderError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class UnsupportedLocally : public Error {
 public:
  using Error::Error;
};

class InvalidPrefix : public Error {
 public:
  using Error::Error;
};

class InvalidSequence : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

class InsufficientRecords : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rlrf
