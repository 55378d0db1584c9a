// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <random>

#include "fastdrive/error.hpp"

namespace fastdrive::testing {

// Error code thrown by `fn`, or nullopt when it returns normally.
inline std::optional<ErrorCode> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace fastdrive::testing
