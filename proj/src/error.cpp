// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/error.hpp"

namespace fastdrive {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kNonScalarLoss: return "NonScalarLoss";
    case ErrorCode::kBadImageSize: return "BadImageSize";
    case ErrorCode::kBadMaskSize: return "BadMaskSize";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kCoverageUnsatisfiable: return "CoverageUnsatisfiable";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace fastdrive
