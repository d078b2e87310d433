#pragma once

#include <stdexcept>
#include <string>

namespace latentgeo {

// Malformed user input: bad dimensions, unparsable files, invalid options.
// The command-line driver maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// A computation that cannot proceed: factorization failure, divergence,
// non-finite intermediate values. Mapped to exit code 1 by the driver.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace latentgeo
