#pragma once

#include <stdexcept>
#include <string>

namespace anchorprop {

// Base for every recoverable failure raised by the library. The CLI maps
// anything derived from Error to the data/validation exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

class EmptyContextError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class JobError : public Error {
 public:
  using Error::Error;
};

}  // namespace anchorprop
