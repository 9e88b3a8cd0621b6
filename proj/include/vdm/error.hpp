#pragma once

#include <stdexcept>
#include <string>

namespace vdm {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kFileNotFound,
  kUnsupportedBitDepth,
  kCorruptStream,
  kIoError,
  kDegenerate,
  kNotFound,
  kConfig,
  kStaleCache,
};

const char* to_string(ErrorCode code);

// Every failure in the library surfaces as this exception; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vdm
