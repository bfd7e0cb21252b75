#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "stfd/tensor.hpp"

namespace stfd {

// Binary layout, all integers little-endian:
//   "STFD" | u32 version | u32 entry count |
//   per entry: u16 name length, UTF-8 name, u8 rank, u32 dims..., f32 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ParamStore<float>& params);
// Loaded tensors carry no requires_grad flag; models copy values by name.
ParamStore<float> deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const ParamStore<float>& params, const std::string& path);
ParamStore<float> load_checkpoint(const std::string& path);

}  // namespace stfd
