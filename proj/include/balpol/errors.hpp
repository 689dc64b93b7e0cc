#pragma once

#include <stdexcept>
#include <string>

namespace balpol {

// Exit codes of the command-line tool map onto these three families.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, inconsistent or insufficient data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite intermediate values, diverging optimizers.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace balpol
