#pragma once

#include <stdexcept>
#include <string>

namespace obsmae {

/// Base error for every failed precondition or malformed input in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a named file or directory is missing or unreadable.
class IoError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace obsmae
