#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mxfer {

// Domain error kinds. The name of each kind is part of the service wire format
// (422 bodies carry it), so keep error_name() in sync.
enum class ErrorCode {
  SyntaxError,
  ChannelMismatch,
  EmptyMotion,
  OutOfRange,
  ShapeMismatch,
  DegenerateBone,
  NotARotation,
  DegenerateInput,
  DuplicateTarget,
  IndexOutOfRange,
  UnknownJoint,
  NoChains,
  TooShort,
  CoverageGap,
  EmptyDatabase,
  InsufficientWindows,
  NoBoundChannels,
  LengthMismatch,
  TooFew,
  FlatSignal,
  InvalidConfig,
  InvalidBinding,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::EmptyMotion: return "EmptyMotion";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBone: return "DegenerateBone";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DuplicateTarget: return "DuplicateTarget";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::UnknownJoint: return "UnknownJoint";
    case ErrorCode::NoChains: return "NoChains";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::InsufficientWindows: return "InsufficientWindows";
    case ErrorCode::NoBoundChannels: return "NoBoundChannels";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFew: return "TooFew";
    case ErrorCode::FlatSignal: return "FlatSignal";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidBinding: return "InvalidBinding";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

// Throws Error(code, message) when cond is false.
inline void require(bool cond, ErrorCode code, std::string_view message) {
  if (!cond) throw Error(code, std::string(message));
}

}  // namespace mxfer
