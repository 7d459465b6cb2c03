#pragma once

#include <stdexcept>
#include <string>

namespace recfno {

/// Base class for every contract violation raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A spectrum handed to a real inverse transform is not conjugate-symmetric.
class SymmetryError : public Error {
 public:
  using Error::Error;
};

/// Requested Fourier mode counts do not fit the current grid.
class ModeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace recfno
