#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

enum class ErrorKind {
  dimension,
  numeric,
  config,
  data,
  protocol,
  undefined_metric,
};

const char* to_string(ErrorKind kind);

// Base of every error thrown by the library. The kind drives the CLI exit
// code (see exit_code()).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::protocol, what) {}
};
struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorKind::undefined_metric, what) {}
};

// 0 success, 2 config, 3 data (shape, protocol and undefined metrics
// included), 4 numeric.
int exit_code(ErrorKind kind);

}  // namespace fedsim
