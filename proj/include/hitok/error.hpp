#pragma once

#include <stdexcept>
#include <string>

namespace hitok {

// Raised when a caller violates an operation's documented precondition
// (shape mismatch, out-of-range level, invalid schedule, ...).
class PreconditionError : public std::invalid_argument {
 public:
  explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

// File and format problems: unreadable files, bad magic, truncated payloads.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace hitok
