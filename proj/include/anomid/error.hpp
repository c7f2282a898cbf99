#pragma once

#include <stdexcept>
#include <string>

namespace anomid {

// Base for everything the library throws on bad input or failed numerics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating data: episode files, model files, arguments.
class DataError : public Error {
 public:
  using Error::Error;
};

// A training run or inference produced non-finite values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace anomid
