#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdg {

enum class ErrorCode {
  PromptTooShort,
  PromptTooLong,
  MalformedTree,
  SyntaxError,
  LeafMismatch,
  DanglingRelation,
  SpanNotFound,
  IndivisibleDim,
  InvalidConfig,
  LengthMismatch,
  ShapeMismatch,
  RecordMismatch,
  InsufficientCombinations,
  DivergedLoss,
  IoError,
  FormatError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PromptTooShort: return "PromptTooShort";
    case ErrorCode::PromptTooLong: return "PromptTooLong";
    case ErrorCode::MalformedTree: return "MalformedTree";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::LeafMismatch: return "LeafMismatch";
    case ErrorCode::DanglingRelation: return "DanglingRelation";
    case ErrorCode::SpanNotFound: return "SpanNotFound";
    case ErrorCode::IndivisibleDim: return "IndivisibleDim";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::RecordMismatch: return "RecordMismatch";
    case ErrorCode::InsufficientCombinations: return "InsufficientCombinations";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this type; `code()`
/// identifies the failure class and `what()` carries a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace sdg
