#pragma once

#include <stdexcept>
#include <string>

namespace didkit {

// Bad input or configuration: malformed CSV, schema mismatches, flag values
// out of range. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// The request is well formed but cannot be estimated on this design: empty
// feasible set, singular regression, a jackknife replicate with nothing left
// to estimate. The CLI maps this to exit code 2.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace didkit
