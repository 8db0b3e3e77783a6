#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hare {

// Error categories. The service maps these onto HTTP status codes.
enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kConflict,
  kParse,
  kAlignment,
  kDimension,
  kCoverage,
  kVersion,
  kCorruptFile,
  kIo,
  kUndefined,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kAlignment: return "alignment_error";
    case ErrorCode::kDimension: return "dimension_mismatch";
    case ErrorCode::kCoverage: return "coverage_error";
    case ErrorCode::kVersion: return "version_mismatch";
    case ErrorCode::kCorruptFile: return "corrupt_file";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kUndefined: return "undefined";
  }
  return "unknown";
}

// Every failure in the library is reported as a hare::Error. `locus` names
// the offending record, document, token, path or parameter.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string locus = {})
      : std::runtime_error(compose(message, locus)),
        code_(code),
        message_(std::move(message)),
        locus_(std::move(locus)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& locus() const noexcept { return locus_; }

 private:
  static std::string compose(const std::string& message, const std::string& locus) {
    return locus.empty() ? message : message + " [" + locus + "]";
  }

  ErrorCode code_;
  std::string message_;
  std::string locus_;
};

}  // namespace hare
