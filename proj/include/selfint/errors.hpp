#pragma once

#include <stdexcept>
#include <string>

namespace selfint {

// Precondition violated by the caller (bad argument, non-finite input, ...).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure did not produce a trustworthy result.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

// Input is well formed but outside what an operation supports (e.g. W2 by
// assignment with unequal weights).
class UnsupportedInput : public std::runtime_error {
 public:
  explicit UnsupportedInput(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

}  // namespace detail
}  // namespace selfint
