#pragma once

#include <stdexcept>
#include <string>

namespace vrulab {

// Bad input: malformed data, out-of-range indices, inconsistent scripts.
// The CLI maps this to exit status 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while doing otherwise valid work: divergence, I/O, subprocess
// trouble. The CLI maps this to exit status 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vrulab
