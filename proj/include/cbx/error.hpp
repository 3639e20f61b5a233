#pragma once

#include <stdexcept>
#include <string>

namespace cbx {

// Base for every error the library reports. Callers that only care about
// "did it work" catch this; the subclasses carry the failure category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input document does not match its schema (lexicon, manifest, config).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A line- or cell-addressed parse failure.
class ParseError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (NaN/inf loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbx
