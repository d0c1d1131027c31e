#pragma once

#include <stdexcept>
#include <string>

namespace emlmlasso {

enum class ErrorKind {
  usage,      // bad command line / grid spec
  config,     // invalid configuration (column mapping, scenario, penalty)
  parse,      // malformed input file
  data,       // data that cannot be modelled (degenerate column, shape mismatch)
  numerical,  // factorization failure, non-PD covariance
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit status for an error kind: 2 usage, 3 data, 4 numerical.
int exit_code(ErrorKind kind);

}  // namespace emlmlasso
