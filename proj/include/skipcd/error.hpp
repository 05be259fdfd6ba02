#pragma once

#include <stdexcept>
#include <string>

namespace skipcd {

// Every recoverable failure in the library surfaces as one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace skipcd
