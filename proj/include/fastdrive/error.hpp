// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastdrive {

enum class ErrorCode {
  kShapeMismatch,
  kNonFiniteValue,
  kNonScalarLoss,
  kBadImageSize,
  kBadMaskSize,
  kDimMismatch,
  kImageTooSmall,
  kCoverageUnsatisfiable,
  kIoError,
  kBadMagic,
  kTruncatedFile,
  kNonFiniteLoss,
  kSingleClass,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace fastdrive
