#pragma once

#include <stdexcept>
#include <string>

namespace omcl {

// Every error raised by the library derives from omcl::Error so callers (the
// CLI in particular) can catch one type and print a diagnostic line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Zero-norm or otherwise unusable feature vector.
class InvalidFeature : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the object's current lifecycle state
// (e.g. integrating into a finalized map).
class StateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace omcl
