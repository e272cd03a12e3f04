#pragma once

#include <stdexcept>
#include <string>

namespace eir {

/// Error taxonomy shared by the library and the CLI exit-code mapping.
enum class ErrorKind {
  config,     // bad configuration / spec (exit 2)
  parameter,  // bad argument value (exit 2)
  dimension,  // shape mismatch (exit 2)
  data,       // file format / I/O problems (exit 3)
  numeric,    // non-finite values, degenerate norms (exit 4)
  domain,     // math domain violation, e.g. log of non-positive (exit 4)
  index,      // out-of-range index (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  /// CLI exit code for this error class. 0 is success by convention.
  int exit_code() const {
    switch (kind_) {
      case ErrorKind::config:
      case ErrorKind::parameter:
      case ErrorKind::dimension:
        return 2;
      case ErrorKind::data:
        return 3;
      default:
        return 4;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::config, msg); }
[[noreturn]] inline void throw_parameter(const std::string& msg) { throw Error(ErrorKind::parameter, msg); }
[[noreturn]] inline void throw_dimension(const std::string& msg) { throw Error(ErrorKind::dimension, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }
[[noreturn]] inline void throw_domain(const std::string& msg) { throw Error(ErrorKind::domain, msg); }
[[noreturn]] inline void throw_index(const std::string& msg) { throw Error(ErrorKind::index, msg); }

}  // namespace eir
