#include "fedsim/errors.hpp"

namespace fedsim {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::undefined_metric: return "undefined-metric";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numeric: return 4;
    case ErrorKind::dimension:
    case ErrorKind::data:
    case ErrorKind::protocol:
    case ErrorKind::undefined_metric: return 3;
  }
  return 1;
}

}  // namespace fedsim
