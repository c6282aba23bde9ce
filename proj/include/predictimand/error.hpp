#pragma once

#include <stdexcept>
#include <string>

namespace predictimand {

// Failure classes map onto CLI exit codes (2 / 3 / 4).
enum class ErrorKind { Usage, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)), detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Stable machine-readable identifier, e.g. "NonContiguousEpisodes".
  const std::string& code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::string detail_;
};

inline Error usage_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Usage, std::move(code), msg);
}
inline Error data_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Data, std::move(code), msg);
}
inline Error numeric_error(std::string code, const std::string& msg) {
  return Error(ErrorKind::Numeric, std::move(code), msg);
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
  }
  return 1;
}

}  // namespace predictimand
