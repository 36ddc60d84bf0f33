#ifndef NAPSUMQ_ERRORS_HPP
#define NAPSUMQ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace napsumq {

// Invalid inputs, malformed files, violated preconditions.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failures: diverged optimizers, non-PD matrices, bracketing failures.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace napsumq

#endif  // NAPSUMQ_ERRORS_HPP
