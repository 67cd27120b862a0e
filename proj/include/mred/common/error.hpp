#pragma once

#include <stdexcept>
#include <string>

namespace mred {

/// Base error for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws Error(what) unless `ok`.
inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

/// Malformed user or file input. Carries an optional 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

}  // namespace mred
