#pragma once

#include <stdexcept>
#include <string>

namespace tc {

// Status codes shared between the C++ core and the C API surface.
enum class Status : int {
  Ok = 0,
  ParseError = 1,
  DomainError = 2,
  PoleError = 3,
  ShapeError = 4,
  StuckError = 5,
  InternalError = 6,
};

class Error : public std::runtime_error {
 public:
  Error(Status s, std::string msg) : std::runtime_error(std::move(msg)), status_(s) {}
  Status status() const noexcept { return status_; }

 private:
  Status status_;
};

[[noreturn]] inline void fail(Status s, const std::string& msg) { throw Error(s, msg); }

inline void require(bool cond, Status s, const std::string& msg) {
  if (!cond) fail(s, msg);
}

}  // namespace tc
