#pragma once

#include <stdexcept>
#include <string>

namespace olla {

enum class ErrorKind {
  schema,
  row,
  parameter,
  capability,
  transport,
  consistency,
  undefined_similarity,
  state,
  exhaustion,
  undefined_interval,
  shape,
  plan,
  coverage,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and tests)
/// can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Row-level parse failure; `line` is 1-based within the source file.
class RowError : public Error {
 public:
  RowError(std::size_t line, const std::string& message)
      : Error(ErrorKind::row, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::row: return "row";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::capability: return "capability";
    case ErrorKind::transport: return "transport";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::undefined_similarity: return "undefined-similarity";
    case ErrorKind::state: return "state";
    case ErrorKind::exhaustion: return "exhaustion";
    case ErrorKind::undefined_interval: return "undefined-interval";
    case ErrorKind::shape: return "shape";
    case ErrorKind::plan: return "plan";
    case ErrorKind::coverage: return "coverage";
  }
  return "unknown";
}

}  // namespace olla
