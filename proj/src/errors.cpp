#include "emlmlasso/errors.hpp"

namespace emlmlasso {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
    case ErrorKind::data: return "data";
    case ErrorKind::numerical: return "numerical";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config: return 2;
    case ErrorKind::parse:
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

}  // namespace emlmlasso
