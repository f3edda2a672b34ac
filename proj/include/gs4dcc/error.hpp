#pragma once

#include <stdexcept>
#include <string>

namespace gs4dcc {

enum class ErrorKind {
  kShape,       // dimension mismatch between inputs
  kInvalid,     // argument outside its documented domain
  kBadMagic,
  kVersion,
  kTruncated,
  kChecksum,
  kFormat,      // structurally malformed payload
  kNumerical,   // non-finite loss, divergence
  kIo,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace gs4dcc
