#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfsb {

enum class ErrorKind {
  Dimension,
  Degenerate,
  Index,
  Contract,
  Determinism,
  Config,
  Split,
  Vocabulary,
  Metric,
  Io,
  Numeric,
  EmptyContext,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` distinguishes the failure
/// class so callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace mfsb
