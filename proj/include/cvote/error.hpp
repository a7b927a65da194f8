#pragma once

#include <stdexcept>
#include <string>

namespace cvote {

enum class ErrorKind {
  config,     // invalid configuration or parameters
  data,       // malformed or inconsistent input data
  dimension,  // vector length mismatch
  numeric,    // domain error, singular fit, non-finite value
  io,         // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace cvote
