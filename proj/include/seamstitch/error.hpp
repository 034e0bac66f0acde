#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seamstitch {

enum class ErrorCode {
  InvalidArgument,
  GroupMismatch,
  Degenerate,
  PointAtInfinity,
  NonFinite,
  Disconnected,
  Parse,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::GroupMismatch: return "group-mismatch";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::PointAtInfinity: return "point-at-infinity";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::Disconnected: return "disconnected";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can emit structured messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace seamstitch
