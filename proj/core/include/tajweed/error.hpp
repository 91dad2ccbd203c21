#pragma once

#include <stdexcept>
#include <string>

namespace tajweed {

/// Failure categories. Each maps to a stable process exit code in the CLI.
enum class ErrorKind {
  kUsage = 1,    // bad arguments or configuration
  kData = 2,     // corpus, audio, cache or checkpoint contents are invalid
  kRuntime = 3,  // training diverged, I/O failed, etc.
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct RuntimeFailure : Error {
  explicit RuntimeFailure(const std::string& what) : Error(ErrorKind::kRuntime, what) {}
};

}  // namespace tajweed
