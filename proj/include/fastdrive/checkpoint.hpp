// SPDX-License-Identifier: Apache-2.0
//
// RPCK named-tensor container (little-endian):
//   "RPCK" | version u32 | entry count u32 |
//   per entry: name length u16 | name bytes | rank u8 | dims u32 x rank | f32 payload
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fastdrive/transformer.hpp"

namespace fastdrive {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_tensor_table(const ParamList& entries);
ParamList decode_tensor_table(const std::vector<std::uint8_t>& bytes);

void write_tensor_table(const ParamList& entries, const std::filesystem::path& path);
ParamList read_tensor_table(const std::filesystem::path& path);

// Text carried as one f32 per byte, so it fits the tensor table.
Tensor text_to_tensor(const std::string& text);
std::string tensor_to_text(const Tensor& t);

}  // namespace fastdrive
